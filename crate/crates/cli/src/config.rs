//! Pipeline settings: command-line flags over a JSON config file over
//! built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use clap::{Args, ValueEnum};
use forge_core::composite::Kernel;
use forge_core::embed::{Embedder, HISTOGRAM_BINS};
use forge_core::model::{DatasetManifest, Modality, ModalityMeta};
use forge_core::pipeline::SynthesisParams;
use forge_core::retrieval::SelectMode;
use forge_core::translation::{
    Mode, SidecarBackend, SidecarConfig, SidecarPool, StubBackend, TranslationBackend,
    DEFAULT_TIMEOUT,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SIDECAR_ENV: &str = "FORGE_SIDECAR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Stub,
    Sidecar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Histogram,
    Sidecar,
}

/// Contents of `--config path.json`. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub pad_frac: Option<f64>,
    pub kernel: Option<[usize; 2]>,
    pub backend: Option<BackendKind>,
    pub sidecar_cmd: Option<String>,
    pub sidecar_timeout_secs: Option<f64>,
    pub mode: Option<Mode>,
    pub select: Option<SelectMode>,
    pub workers: Option<usize>,
    pub modality: Option<Modality>,
    pub embedder: Option<EmbedderKind>,
    pub histogram_bins: Option<usize>,
    pub per_frame: Option<bool>,
    #[serde(default)]
    pub modality_meta: BTreeMap<Modality, ModalityMeta>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

fn parse_kernel(s: &str) -> Result<[usize; 2], String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    match s.split_once(['x', 'X']) {
        Some((w, h)) => Ok([parse(w)?, parse(h)?]),
        None => parse(s).map(|k| [k, k]),
    }
}

/// Pipeline flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// JSON config file; flags override its values
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    /// Bounding-box padding as a fraction of each side
    #[arg(long, global = true)]
    pub pad_frac: Option<f64>,
    /// Dilation kernel, `WxH` or a single size
    #[arg(long, global = true, value_parser = parse_kernel)]
    pub kernel: Option<[usize; 2]>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Sidecar launch command (default: $FORGE_SIDECAR)
    #[arg(long, global = true)]
    pub sidecar_cmd: Option<String>,
    #[arg(long, global = true)]
    pub sidecar_timeout_secs: Option<f64>,
    /// residual or absolute
    #[arg(long, global = true)]
    pub mode: Option<Mode>,
    /// Background selection: max (closest) or min
    #[arg(long, global = true)]
    pub select: Option<SelectMode>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Restrict to one modality (default: both)
    #[arg(long, global = true)]
    pub modality: Option<Modality>,
    #[arg(long, global = true, value_enum)]
    pub embedder: Option<EmbedderKind>,
    #[arg(long, global = true)]
    pub histogram_bins: Option<usize>,
    /// Choose a background per frame instead of one per set
    #[arg(long, global = true)]
    pub per_frame: bool,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub pad_frac: f64,
    pub kernel: Kernel,
    pub backend: BackendKind,
    pub sidecar_cmd: Option<String>,
    pub sidecar_timeout: Duration,
    pub mode: Mode,
    pub select: SelectMode,
    pub workers: usize,
    pub modality: Option<Modality>,
    pub embedder: EmbedderKind,
    pub histogram_bins: usize,
    pub per_frame: bool,
    pub modality_meta: BTreeMap<Modality, ModalityMeta>,
}

impl Settings {
    pub fn resolve(args: &PipelineArgs, env_sidecar: Option<String>) -> CliResult<Self> {
        let file = match &args.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let [kw, kh] = args.kernel.or(file.kernel).unwrap_or([8, 8]);
        let timeout = match args.sidecar_timeout_secs.or(file.sidecar_timeout_secs) {
            Some(s) if s.is_finite() && s > 0.0 => Duration::from_secs_f64(s),
            Some(s) => {
                return Err(CliError::Invalid(format!(
                    "sidecar timeout must be positive, got {s}"
                )))
            }
            None => DEFAULT_TIMEOUT,
        };
        let s = Settings {
            pad_frac: args.pad_frac.or(file.pad_frac).unwrap_or(0.1),
            kernel: Kernel::new(kw, kh),
            backend: args.backend.or(file.backend).unwrap_or_default(),
            sidecar_cmd: args
                .sidecar_cmd
                .clone()
                .or(file.sidecar_cmd)
                .or(env_sidecar)
                .filter(|c| !c.trim().is_empty()),
            sidecar_timeout: timeout,
            mode: args.mode.or(file.mode).unwrap_or_default(),
            select: args.select.or(file.select).unwrap_or_default(),
            workers: args.workers.or(file.workers).unwrap_or(1),
            modality: args.modality.or(file.modality),
            embedder: args.embedder.or(file.embedder).unwrap_or_default(),
            histogram_bins: args
                .histogram_bins
                .or(file.histogram_bins)
                .unwrap_or(HISTOGRAM_BINS),
            per_frame: args.per_frame || file.per_frame.unwrap_or(false),
            modality_meta: file.modality_meta,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Invalid(msg));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if !(self.pad_frac.is_finite() && self.pad_frac >= 0.0) {
            return bad(format!(
                "pad_frac must be a non-negative number, got {}",
                self.pad_frac
            ));
        }
        if self.kernel.width == 0 || self.kernel.height == 0 {
            return bad("kernel dimensions must be at least 1".into());
        }
        if self.histogram_bins == 0 {
            return bad("histogram_bins must be at least 1".into());
        }
        let needs_sidecar =
            self.backend == BackendKind::Sidecar || self.embedder == EmbedderKind::Sidecar;
        if needs_sidecar && self.sidecar_cmd.is_none() {
            return bad(format!(
                "sidecar backend needs --sidecar-cmd or ${SIDECAR_ENV}"
            ));
        }
        for (m, meta) in &self.modality_meta {
            if meta.modality != *m {
                return bad(format!(
                    "modality_meta key {m} holds {} metadata",
                    meta.modality
                ));
            }
            meta.validate()?;
        }
        Ok(())
    }

    pub fn modalities(&self) -> Vec<Modality> {
        match self.modality {
            Some(m) => vec![m],
            None => Modality::ALL.to_vec(),
        }
    }

    pub fn single_modality(&self) -> CliResult<Modality> {
        self.modality
            .ok_or_else(|| CliError::Invalid("this command needs --modality".into()))
    }

    pub fn params(&self) -> SynthesisParams {
        SynthesisParams {
            pad_frac: self.pad_frac,
            kernel: self.kernel,
        }
    }

    /// Normalization range: config, then manifest, then the full u16 range.
    pub fn meta(&self, m: Modality, manifest: Option<&DatasetManifest>) -> ModalityMeta {
        if let Some(meta) = self.modality_meta.get(&m) {
            return meta.clone();
        }
        if let Some(meta) = manifest.and_then(|man| man.meta(m).ok()) {
            return meta.clone();
        }
        log::warn!("no normalization metadata for {m}; using the full 16-bit range");
        ModalityMeta::full_range(m)
    }

    fn sidecar_config(&self) -> SidecarConfig {
        let cmd = self.sidecar_cmd.clone().unwrap_or_default();
        SidecarConfig::new(cmd).with_timeout(self.sidecar_timeout)
    }

    pub fn backend(&self) -> CliResult<Box<dyn TranslationBackend>> {
        Ok(match self.backend {
            BackendKind::Stub => Box::new(StubBackend::new(self.mode)),
            BackendKind::Sidecar => {
                let pool = SidecarPool::new(self.sidecar_config(), self.workers)?;
                Box::new(SidecarBackend::new(pool, self.mode))
            }
        })
    }

    pub fn embedder(&self) -> CliResult<Embedder> {
        Ok(match self.embedder {
            EmbedderKind::Histogram => Embedder::Histogram {
                bins: self.histogram_bins,
            },
            EmbedderKind::Sidecar => {
                Embedder::Sidecar(SidecarPool::new(self.sidecar_config(), self.workers)?)
            }
        })
    }
}
