//! Per-sample synthesis: preprocess, translate, composite, write.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::composite::{composite, Kernel};
use crate::error::{Error, Result};
use crate::geometry::{normalized_sdf_with, BBox};
use crate::model::{
    denormalize, load_mask8, load_rgb8, save_gray16, DatasetManifest, ImagePlane, MaskGrid,
    Modality, ModalityMeta, SampleEntry,
};
use crate::par::Execution;
use crate::preprocess::{assemble_input, build_crop_bundle, FiveChannelInput};
use crate::translation::{translate, TranslationBackend};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisParams {
    pub pad_frac: f64,
    pub kernel: Kernel,
}

impl Default for SynthesisParams {
    fn default() -> Self {
        SynthesisParams {
            pad_frac: 0.1,
            kernel: Kernel::default(),
        }
    }
}

/// A selected background frame, normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    pub id: String,
    pub path: PathBuf,
    pub frame: ImagePlane<f32>,
}

/// Which background each sample uses, per modality: one per set, optionally
/// overridden per sample.
#[derive(Debug, Clone, Default)]
pub struct BackgroundAssignment {
    per_set: BTreeMap<Modality, Arc<Background>>,
    per_sample: HashMap<(String, Modality), Arc<Background>>,
}

impl BackgroundAssignment {
    pub fn set_default(&mut self, m: Modality, bg: Arc<Background>) {
        self.per_set.insert(m, bg);
    }

    pub fn set_for_sample(&mut self, id: impl Into<String>, m: Modality, bg: Arc<Background>) {
        self.per_sample.insert((id.into(), m), bg);
    }

    pub fn get(&self, id: &str, m: Modality) -> Option<&Background> {
        self.per_sample
            .get(&(id.to_string(), m))
            .or_else(|| self.per_set.get(&m))
            .map(Arc::as_ref)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub frame: ImagePlane<f32>,
    pub bbox: BBox,
    pub input: FiveChannelInput,
    pub crop: ImagePlane<f32>,
}

/// Runs one frame through preprocess, the backend, finalize and composite.
pub fn synthesize_frame(
    backend: &dyn TranslationBackend,
    rgb: &ImagePlane<f32>,
    mask: &MaskGrid,
    bg: &ImagePlane<f32>,
    params: &SynthesisParams,
) -> Result<FrameOutput> {
    let sdf = normalized_sdf_with(Execution::Sequential, mask);
    let bundle = build_crop_bundle(rgb, mask, bg, &sdf, params.pad_frac)?;
    let input = assemble_input(&bundle);
    let crop = translate(backend, &input)?.finalize(&input)?;
    let frame = composite(bg, &crop, bundle.bbox, mask, params.kernel)?;
    Ok(FrameOutput {
        frame,
        bbox: bundle.bbox,
        input,
        crop,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleFailure {
    pub id: String,
    pub modality: Option<Modality>,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct SynthesisReport {
    pub manifest: DatasetManifest,
    pub failures: Vec<SampleFailure>,
    pub written: usize,
}

pub struct SynthesisJob<'a> {
    pub manifest: &'a DatasetManifest,
    pub modalities: Vec<Modality>,
    pub backgrounds: &'a BackgroundAssignment,
    pub metas: &'a BTreeMap<Modality, ModalityMeta>,
    pub backend: &'a dyn TranslationBackend,
    pub params: SynthesisParams,
    /// Outputs go to `<out_dir>/<modality>/<id>.png`.
    pub out_dir: &'a Path,
}

fn absolute(m: &DatasetManifest, p: &Path) -> Result<PathBuf> {
    let full = m.resolve(p);
    std::fs::canonicalize(&full).map_err(|e| Error::io(full, e))
}

/// Output file for one sample, relative to `out_dir`.
pub fn output_relpath(m: Modality, id: &str) -> PathBuf {
    PathBuf::from(m.as_str()).join(format!("{id}.png"))
}

impl SynthesisJob<'_> {
    fn run_sample(&self, s: &SampleEntry) -> (Option<SampleEntry>, Vec<SampleFailure>, usize) {
        let fail = |m: Option<Modality>, e: Error| SampleFailure {
            id: s.id.clone(),
            modality: m,
            error: e.to_string(),
        };
        let loaded = (|| -> Result<_> {
            let mask_path = s
                .mask
                .as_deref()
                .ok_or_else(|| Error::Schema(format!("sample {} has no mask", s.id)))?;
            let rgb = load_rgb8(self.manifest.resolve(&s.rgb))?;
            let mask = load_mask8(self.manifest.resolve(mask_path))?;
            if mask.dims() != rgb.dims() {
                return Err(Error::DimMismatch(format!(
                    "mask {:?} vs rgb {:?}",
                    mask.dims(),
                    rgb.dims()
                )));
            }
            if mask.is_empty() {
                return Err(Error::EmptyMask);
            }
            let mut entry = SampleEntry::new(s.id.clone(), absolute(self.manifest, &s.rgb)?);
            entry.mask = Some(absolute(self.manifest, mask_path)?);
            entry.action_label = s.action_label.clone();
            entry.split = s.split;
            Ok((rgb.to_unit_f32(), mask, entry))
        })();
        let (rgb, mask, mut entry) = match loaded {
            Ok(v) => v,
            Err(e) => return (None, vec![fail(None, e)], 0),
        };
        let mut failures = Vec::new();
        let mut written = 0;
        for &m in &self.modalities {
            let run = || -> Result<PathBuf> {
                let bg = self
                    .backgrounds
                    .get(&s.id, m)
                    .ok_or_else(|| Error::Schema(format!("no {m} background assigned")))?;
                let meta = self
                    .metas
                    .get(&m)
                    .ok_or_else(|| Error::MetaMissing(m.to_string()))?;
                let out = synthesize_frame(self.backend, &rgb, &mask, &bg.frame, &self.params)?;
                let rel = output_relpath(m, &s.id);
                save_gray16(&denormalize(&out.frame, meta)?, self.out_dir.join(&rel))?;
                Ok(rel)
            };
            match run() {
                Ok(rel) => {
                    entry.set_modality(m, rel);
                    written += 1;
                }
                Err(e) => failures.push(fail(Some(m), e)),
            }
        }
        let keep = entry.depth.is_some() || entry.thermal.is_some();
        (keep.then_some(entry), failures, written)
    }

    /// Synthesizes every sample; failures are collected, not fatal.
    pub fn run(&self, exec: Execution) -> Result<SynthesisReport> {
        for &m in &self.modalities {
            let dir = self.out_dir.join(m.as_str());
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir, e))?;
        }
        let results = exec.map(&self.manifest.samples, |s| self.run_sample(s));
        let mut out = DatasetManifest::default();
        let mut failures = Vec::new();
        let mut written = 0;
        for (entry, fails, n) in results {
            out.samples.extend(entry);
            for f in &fails {
                log::warn!("sample {} ({:?}) skipped: {}", f.id, f.modality, f.error);
            }
            failures.extend(fails);
            written += n;
        }
        for &m in &self.modalities {
            if let Some(meta) = self.metas.get(&m) {
                out.modality_meta.insert(m, meta.clone());
            }
        }
        Ok(SynthesisReport {
            manifest: out.with_base_dir(self.out_dir),
            failures,
            written,
        })
    }
}
