//! Client for model-hosting sidecar processes.
//!
//! Protocol: line-delimited JSON over the child's stdin/stdout, tensors
//! exchanged as `TMF1` files in a temp dir owned by the client. The first
//! line from the child must be `{"ready": true, "ops": [...]}`. Requests are
//! `{"id", "op", "input", "params"}`; responses `{"id", "ok": true,
//! "output"}` or `{"id", "ok": false, "error"}`. One request is in flight
//! per process.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::{read_tensor, write_tensor, ImagePlane, Tensor};
use crate::preprocess::FiveChannelInput;
use crate::translation::{Mode, TranslationBackend};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, PartialEq)]
pub struct SidecarConfig {
    /// Shell command line that starts the sidecar.
    pub command: String,
    pub timeout: Duration,
}

impl SidecarConfig {
    pub fn new(command: impl Into<String>) -> Self {
        SidecarConfig {
            command: command.into(),
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

#[derive(Deserialize)]
struct Handshake {
    ready: bool,
    #[serde(default)]
    ops: Vec<String>,
}

#[derive(Deserialize)]
struct Response {
    id: i64,
    ok: bool,
    #[serde(default)]
    output: Option<PathBuf>,
    #[serde(default)]
    error: Option<String>,
}

/// One sidecar process. Not shareable across threads; see [`SidecarPool`].
pub struct SidecarClient {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    ops: Vec<String>,
    next_id: u64,
    timeout: Duration,
    workdir: tempfile::TempDir,
    healthy: bool,
}

impl std::fmt::Debug for SidecarClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SidecarClient")
            .field("pid", &self.child.id())
            .field("ops", &self.ops)
            .field("healthy", &self.healthy)
            .finish()
    }
}

impl SidecarClient {
    /// Launches the command and waits for the handshake line.
    pub fn spawn(cfg: &SidecarConfig) -> Result<Self> {
        let workdir = tempfile::Builder::new()
            .prefix("forge-sidecar-")
            .tempdir()
            .map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(format!("exec {}", cfg.command))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::BackendUnavailable(format!("spawn {:?}: {e}", cfg.command)))?;

        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        if let Some(stderr) = child.stderr.take() {
            thread::spawn(move || {
                for line in BufReader::new(stderr).lines().map_while(|l| l.ok()) {
                    log::warn!(target: "forge::sidecar", "{line}");
                }
            });
        }

        let stdin = child.stdin.take();
        let mut client = SidecarClient {
            child,
            stdin,
            lines,
            ops: Vec::new(),
            next_id: 0,
            timeout: cfg.timeout,
            workdir,
            healthy: true,
        };
        let line = client.read_line()?;
        let hs: Handshake = serde_json::from_str(&line)
            .map_err(|e| client.poison(Error::Protocol(format!("bad handshake {line:?}: {e}"))))?;
        if !hs.ready {
            return Err(client.poison(Error::Protocol("sidecar reported ready=false".into())));
        }
        client.ops = hs.ops;
        Ok(client)
    }

    pub fn ops(&self) -> &[String] {
        &self.ops
    }

    pub fn is_healthy(&self) -> bool {
        self.healthy
    }

    /// Directory where request tensors are written.
    pub fn workdir(&self) -> &Path {
        self.workdir.path()
    }

    fn poison(&mut self, err: Error) -> Error {
        self.healthy = false;
        let _ = self.child.kill();
        let _ = self.child.wait();
        err
    }

    fn read_line(&mut self) -> Result<String> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => {
                Err(self.poison(Error::BackendUnavailable(format!("reading stdout: {e}"))))
            }
            Err(RecvTimeoutError::Timeout) => {
                let t = self.timeout;
                Err(self.poison(Error::Timeout(t)))
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.healthy = false;
                let status = self.child.wait();
                Err(match status {
                    Ok(s) if !s.success() && s.code().is_some() => {
                        Error::NonzeroExit(s.to_string())
                    }
                    Ok(s) => Error::BackendUnavailable(format!("sidecar closed its output ({s})")),
                    Err(e) => Error::BackendUnavailable(e.to_string()),
                })
            }
        }
    }

    /// Sends one request and returns the output tensor path.
    pub fn request(&mut self, op: &str, input: &Path, params: Value) -> Result<PathBuf> {
        if !self.healthy {
            return Err(Error::BackendUnavailable("sidecar is not running".into()));
        }
        if !self.ops.iter().any(|o| o == op) {
            return Err(Error::Protocol(format!(
                "sidecar does not advertise op {op:?}"
            )));
        }
        let id = self.next_id;
        self.next_id += 1;
        let line = json!({"id": id, "op": op, "input": input, "params": params}).to_string();
        let write = self
            .stdin
            .as_mut()
            .map(|s| writeln!(s, "{line}").and_then(|_| s.flush()));
        if !matches!(write, Some(Ok(()))) {
            // the child is gone; surface how it exited
            return Err(match self.read_line() {
                Err(e) => e,
                Ok(_) => self.poison(Error::BackendUnavailable("stdin closed".into())),
            });
        }
        let reply = self.read_line().map_err(|e| match e {
            Error::NonzeroExit(s) => {
                Error::BackendUnavailable(format!("sidecar died mid-request: {s}"))
            }
            other => other,
        })?;
        let resp: Response = serde_json::from_str(&reply)
            .map_err(|e| Error::Protocol(format!("malformed response {reply:?}: {e}")))?;
        if resp.id != id as i64 {
            return Err(self.poison(Error::Protocol(format!(
                "response id {} for request {id}",
                resp.id
            ))));
        }
        if !resp.ok {
            return Err(Error::Protocol(format!(
                "sidecar error for {op}: {}",
                resp.error.unwrap_or_default()
            )));
        }
        resp.output
            .ok_or_else(|| Error::Protocol("ok response without output".into()))
    }

    /// Writes `t` to the work dir, runs `op` and reads back the result.
    pub fn call(&mut self, op: &str, t: &Tensor, params: Value) -> Result<Tensor> {
        let input = self
            .workdir
            .path()
            .join(format!("req-{}.tmf", self.next_id));
        write_tensor(t, &input)?;
        let out = self.request(op, &input, params);
        let _ = std::fs::remove_file(&input);
        let out = out?;
        let t = read_tensor(&out).map_err(|e| match e {
            Error::Io { .. } | Error::MissingFile(_) => {
                Error::Protocol(format!("unreadable output {}: {e}", out.display()))
            }
            other => other,
        });
        if out.starts_with(self.workdir.path()) {
            let _ = std::fs::remove_file(&out);
        }
        t
    }

    pub fn translate(&mut self, input: &FiveChannelInput, mode: Mode) -> Result<ImagePlane<f32>> {
        let n = input.size();
        let t = self.call(
            "translate",
            &input.to_tensor(),
            json!({"mode": mode.as_str()}),
        )?;
        let ok_dims = matches!(t.dims(), [1, h, w] if *h == n && *w == n)
            || matches!(t.dims(), [h, w] if *h == n && *w == n);
        let data = match (ok_dims, t.as_f32()) {
            (true, Some(d)) => d.to_vec(),
            _ => {
                return Err(Error::Protocol(format!(
                    "translate returned {:?} {:?}, expected f32 [1, {n}, {n}]",
                    t.dtype(),
                    t.dims()
                )))
            }
        };
        ImagePlane::new(n, n, 1, data)
    }

    /// Single embedding / feature vector for one image tensor.
    pub fn vector(&mut self, op: &str, image: &Tensor, params: Value) -> Result<Vec<f32>> {
        let t = self.call(op, image, params)?;
        match (t.dims(), t.as_f32()) {
            ([_], Some(d)) | ([1, _], Some(d)) => Ok(d.to_vec()),
            (dims, _) => Err(Error::Protocol(format!(
                "{op} returned {:?} {dims:?}",
                t.dtype()
            ))),
        }
    }
}

impl Drop for SidecarClient {
    fn drop(&mut self) {
        drop(self.stdin.take());
        if let Ok(None) = self.child.try_wait() {
            // give a well-behaved sidecar a moment to see EOF
            for _ in 0..20 {
                thread::sleep(Duration::from_millis(5));
                if !matches!(self.child.try_wait(), Ok(None)) {
                    return;
                }
            }
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

/// Up to `size` sidecar processes, each lent to one worker at a time.
/// Unhealthy processes are dropped and replaced on the next checkout.
pub struct SidecarPool {
    cfg: SidecarConfig,
    size: usize,
    state: Mutex<PoolState>,
    returned: Condvar,
}

struct PoolState {
    idle: Vec<SidecarClient>,
    live: usize,
}

impl SidecarPool {
    /// Starts one process eagerly so configuration errors surface at once.
    pub fn new(cfg: SidecarConfig, size: usize) -> Result<Self> {
        let first = SidecarClient::spawn(&cfg)?;
        Ok(SidecarPool {
            cfg,
            size: size.max(1),
            state: Mutex::new(PoolState {
                idle: vec![first],
                live: 1,
            }),
            returned: Condvar::new(),
        })
    }

    pub fn ops(&self) -> Vec<String> {
        let st = self.state.lock().unwrap();
        st.idle.first().map(|c| c.ops.clone()).unwrap_or_default()
    }

    pub fn with_client<R>(&self, f: impl FnOnce(&mut SidecarClient) -> Result<R>) -> Result<R> {
        let mut client = {
            let mut st = self.state.lock().unwrap();
            loop {
                if let Some(c) = st.idle.pop() {
                    break c;
                }
                if st.live < self.size {
                    st.live += 1;
                    drop(st);
                    match SidecarClient::spawn(&self.cfg) {
                        Ok(c) => break c,
                        Err(e) => {
                            self.state.lock().unwrap().live -= 1;
                            self.returned.notify_one();
                            return Err(e);
                        }
                    }
                }
                st = self.returned.wait(st).unwrap();
            }
        };
        let out = f(&mut client);
        let mut st = self.state.lock().unwrap();
        if client.is_healthy() {
            st.idle.push(client);
        } else {
            st.live -= 1;
        }
        self.returned.notify_one();
        out
    }
}

pub struct SidecarBackend {
    pool: SidecarPool,
    mode: Mode,
}

impl SidecarBackend {
    pub fn new(pool: SidecarPool, mode: Mode) -> Self {
        SidecarBackend { pool, mode }
    }

    pub fn pool(&self) -> &SidecarPool {
        &self.pool
    }
}

impl TranslationBackend for SidecarBackend {
    fn name(&self) -> &str {
        "sidecar"
    }

    fn mode(&self) -> Mode {
        self.mode
    }

    fn predict(&self, input: &FiveChannelInput) -> Result<ImagePlane<f32>> {
        self.pool.with_client(|c| c.translate(input, self.mode))
    }
}
