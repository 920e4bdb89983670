use std::path::{Path, PathBuf};

use forge_core::model::{DatasetManifest, Modality, SampleEntry};
use forge_core::pipeline::SampleFailure;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

pub mod eval;
pub mod index;
pub mod matching;
pub mod stages;
pub mod synthesize;

/// What a command prints on stdout, plus how many samples it skipped.
pub struct Report {
    pub body: Value,
    pub failures: usize,
}

impl Report {
    pub fn ok(body: Value) -> Self {
        Report { body, failures: 0 }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// `*.png` files directly inside `dir`, sorted by name. A missing
/// directory counts as empty.
pub fn list_pngs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(CliError::io(dir, e)),
    };
    let mut out = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| CliError::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn stem_id(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn canonical(m: &DatasetManifest, p: &Path) -> CliResult<PathBuf> {
    let full = m.resolve(p);
    std::fs::canonicalize(&full).map_err(|e| CliError::io(full, e))
}

/// Copy of `s` with every referenced file as an absolute path, so it can
/// be written into a manifest living elsewhere.
pub fn absolutize(m: &DatasetManifest, s: &SampleEntry) -> CliResult<SampleEntry> {
    let mut out = s.clone();
    out.rgb = canonical(m, &s.rgb)?;
    if let Some(mask) = &s.mask {
        out.mask = Some(canonical(m, mask)?);
    }
    for modality in Modality::ALL {
        if let Some(p) = s.modality(modality) {
            out.set_modality(modality, canonical(m, p)?);
        }
    }
    Ok(out)
}

pub fn failures_json(failures: &[SampleFailure]) -> Value {
    failures
        .iter()
        .map(|f| json!({"id": f.id, "modality": f.modality, "error": f.error}))
        .collect()
}

pub fn mask_path(s: &SampleEntry) -> forge_core::Result<&Path> {
    s.mask
        .as_deref()
        .ok_or_else(|| forge_core::Error::Schema(format!("sample {} has no mask", s.id)))
}
