use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ImagePlane;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Depth,
    Thermal,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Depth, Modality::Thermal];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Depth => "depth",
            Modality::Thermal => "thermal",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth" => Ok(Modality::Depth),
            "thermal" => Ok(Modality::Thermal),
            other => Err(Error::Schema(format!("unknown modality {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    U16,
}

/// How a 16-bit modality PNG maps onto the internal `[0, 1]` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityMeta {
    pub modality: Modality,
    #[serde(default = "default_encoding")]
    pub encoding: Encoding,
    #[serde(default)]
    pub unit: String,
    pub norm_min: f64,
    pub norm_max: f64,
}

fn default_encoding() -> Encoding {
    Encoding::U16
}

impl ModalityMeta {
    pub fn new(
        modality: Modality,
        unit: impl Into<String>,
        norm_min: f64,
        norm_max: f64,
    ) -> Result<Self> {
        let meta = ModalityMeta {
            modality,
            encoding: Encoding::U16,
            unit: unit.into(),
            norm_min,
            norm_max,
        };
        meta.validate()?;
        Ok(meta)
    }

    /// Full `0..=65535` range.
    pub fn full_range(modality: Modality) -> Self {
        ModalityMeta {
            modality,
            encoding: Encoding::U16,
            unit: String::new(),
            norm_min: 0.0,
            norm_max: 65535.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.norm_min.is_finite()
            && self.norm_max.is_finite()
            && self.norm_max > self.norm_min)
        {
            return Err(Error::Schema(format!(
                "{}: norm_max ({}) must exceed norm_min ({})",
                self.modality, self.norm_max, self.norm_min
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn to_unit(&self, v: u16) -> f32 {
        let t = (f64::from(v) - self.norm_min) / (self.norm_max - self.norm_min);
        t.clamp(0.0, 1.0) as f32
    }

    /// Inverse of [`to_unit`](Self::to_unit), rounding half up.
    #[inline]
    pub fn from_unit(&self, x: f32) -> u16 {
        let v = f64::from(x) * (self.norm_max - self.norm_min) + self.norm_min;
        (v + 0.5).floor().clamp(0.0, 65535.0) as u16
    }
}

/// `clamp((v - norm_min) / (norm_max - norm_min), 0, 1)` per pixel.
pub fn normalize(img: &ImagePlane<u16>, meta: &ModalityMeta) -> Result<ImagePlane<f32>> {
    if img.channels() != 1 {
        return Err(Error::DimMismatch(format!(
            "normalize expects 1 channel, got {}",
            img.channels()
        )));
    }
    let data = img.data().iter().map(|&v| meta.to_unit(v)).collect();
    ImagePlane::new(img.width(), img.height(), 1, data)
}

pub fn denormalize(img: &ImagePlane<f32>, meta: &ModalityMeta) -> Result<ImagePlane<u16>> {
    if img.channels() != 1 {
        return Err(Error::DimMismatch(format!(
            "denormalize expects 1 channel, got {}",
            img.channels()
        )));
    }
    let data = img.data().iter().map(|&x| meta.from_unit(x)).collect();
    ImagePlane::new(img.width(), img.height(), 1, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub id: String,
    pub rgb: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl SampleEntry {
    pub fn new(id: impl Into<String>, rgb: impl Into<PathBuf>) -> Self {
        SampleEntry {
            id: id.into(),
            rgb: rgb.into(),
            mask: None,
            depth: None,
            thermal: None,
            action_label: None,
            split: None,
        }
    }

    pub fn modality(&self, m: Modality) -> Option<&Path> {
        match m {
            Modality::Depth => self.depth.as_deref(),
            Modality::Thermal => self.thermal.as_deref(),
        }
    }

    pub fn set_modality(&mut self, m: Modality, path: PathBuf) {
        match m {
            Modality::Depth => self.depth = Some(path),
            Modality::Thermal => self.thermal = Some(path),
        }
    }

    fn paths(&self) -> impl Iterator<Item = &Path> {
        std::iter::once(self.rgb.as_path())
            .chain(self.mask.as_deref())
            .chain(self.depth.as_deref())
            .chain(self.thermal.as_deref())
    }
}

/// Binds sample ids to modality files. Relative paths resolve against the
/// directory holding the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    #[serde(default)]
    pub samples: Vec<SampleEntry>,
    #[serde(default)]
    pub modality_meta: BTreeMap<Modality, ModalityMeta>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        DatasetManifest {
            version: MANIFEST_VERSION,
            samples: Vec::new(),
            modality_meta: BTreeMap::new(),
            base_dir: PathBuf::new(),
        }
    }
}

impl DatasetManifest {
    pub fn new(samples: Vec<SampleEntry>) -> Self {
        DatasetManifest {
            samples,
            ..Default::default()
        }
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn meta(&self, m: Modality) -> Result<&ModalityMeta> {
        self.modality_meta
            .get(&m)
            .ok_or_else(|| Error::MetaMissing(m.to_string()))
    }

    pub fn sample(&self, id: &str) -> Option<&SampleEntry> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Checks version, id uniqueness and meta ranges (not file existence).
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Schema(format!(
                "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        let mut seen = HashSet::new();
        for s in &self.samples {
            if s.id.is_empty() {
                return Err(Error::Schema("sample id must not be empty".into()));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        for (key, meta) in &self.modality_meta {
            if *key != meta.modality {
                return Err(Error::Schema(format!(
                    "modality_meta key {key} holds meta for {}",
                    meta.modality
                )));
            }
            meta.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut m: DatasetManifest =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        m.base_dir = base_dir.into();
        m.validate()?;
        Ok(m)
    }

    /// Pretty JSON with a fixed key order and trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// Parses, validates and checks that every referenced file exists.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let m = DatasetManifest::from_json(&text, base)?;
    for s in &m.samples {
        for p in s.paths() {
            let full = m.resolve(p);
            if !full.is_file() {
                return Err(Error::MissingFile(full));
            }
        }
    }
    Ok(m)
}

pub fn save_manifest(m: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    m.validate()?;
    std::fs::write(path, m.to_json()).map_err(|e| Error::io(path, e))
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_manifest(path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_manifest(self, path)
    }
}
