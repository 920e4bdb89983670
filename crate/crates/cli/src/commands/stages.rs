//! The individual pipeline stages: `preprocess`, `translate`, `composite`.
//! Each stage directory holds one TMF1 tensor per sample plus `index.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use forge_core::composite::composite;
use forge_core::geometry::{normalized_sdf, BBox};
use forge_core::model::{
    denormalize, load_gray16, load_manifest, load_mask8, load_rgb8, normalize, read_tensor,
    save_gray16, save_manifest, write_tensor, DatasetManifest, ImagePlane, Modality, Tensor,
};
use forge_core::pipeline::{output_relpath, SampleFailure};
use forge_core::preprocess::{
    assemble_input, build_crop_bundle, FiveChannelInput, INPUT_CHANNELS, INPUT_SIZE,
};
use forge_core::translation::{translate, Mode};
use forge_core::{Error, Execution};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{absolutize, create_dir, failures_json, mask_path, read_json, write_json, Report};
use crate::config::Settings;
use crate::error::{CliError, CliResult};

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSample {
    /// Relative to the stage directory.
    pub tensor: PathBuf,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageIndex {
    pub modality: Modality,
    pub background: PathBuf,
    pub size: usize,
    pub channels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    pub samples: BTreeMap<String, StageSample>,
}

impl StageIndex {
    fn load(dir: &Path) -> CliResult<Self> {
        read_json(&dir.join(INDEX_FILE))
    }
}

type SampleResult<T> = Result<T, SampleFailure>;

fn failure(id: &str, modality: Modality, e: impl std::fmt::Display) -> SampleFailure {
    log::warn!("sample {id} ({modality}) skipped: {e}");
    SampleFailure {
        id: id.to_string(),
        modality: Some(modality),
        error: e.to_string(),
    }
}

fn split<T>(results: Vec<SampleResult<T>>) -> (Vec<T>, Vec<SampleFailure>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(f) => failed.push(f),
        }
    }
    (ok, failed)
}

fn load_background(
    path: &Path,
    settings: &Settings,
    modality: Modality,
    manifest: Option<&DatasetManifest>,
) -> CliResult<ImagePlane<f32>> {
    let meta = settings.meta(modality, manifest);
    Ok(normalize(&load_gray16(path)?, &meta)?)
}

fn canonical(p: &Path) -> CliResult<PathBuf> {
    std::fs::canonicalize(p).map_err(|e| CliError::io(p, e))
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// 16-bit background frame for the selected --modality
    #[arg(long)]
    pub background: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn preprocess(args: &PreprocessArgs, settings: &Settings) -> CliResult<Report> {
    let modality = settings.single_modality()?;
    let manifest = load_manifest(&args.manifest)?;
    let bg = load_background(&args.background, settings, modality, Some(&manifest))?;
    create_dir(&args.out)?;
    let results = Execution::default().map(&manifest.samples, |s| {
        let run = || -> forge_core::Result<StageSample> {
            let rgb = load_rgb8(manifest.resolve(&s.rgb))?.to_unit_f32();
            let mask = load_mask8(manifest.resolve(mask_path(s)?))?;
            if mask.is_empty() {
                return Err(Error::EmptyMask);
            }
            let bundle =
                build_crop_bundle(&rgb, &mask, &bg, &normalized_sdf(&mask), settings.pad_frac)?;
            let tensor = PathBuf::from(format!("{}.tmf", s.id));
            write_tensor(&assemble_input(&bundle).to_tensor(), args.out.join(&tensor))?;
            Ok(StageSample {
                tensor,
                bbox: bundle.bbox,
            })
        };
        run()
            .map(|t| (s.id.clone(), t))
            .map_err(|e| failure(&s.id, modality, e))
    });
    let (done, failed) = split(results);
    let index = StageIndex {
        modality,
        background: canonical(&args.background)?,
        size: INPUT_SIZE,
        channels: INPUT_CHANNELS.iter().map(|c| c.to_string()).collect(),
        mode: None,
        backend: None,
        samples: done.into_iter().collect(),
    };
    let index_path = args.out.join(INDEX_FILE);
    write_json(&index_path, &index)?;
    Ok(Report {
        body: json!({
            "index": index_path,
            "written": index.samples.len(),
            "failures": failures_json(&failed),
        }),
        failures: failed.len(),
    })
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Directory written by `preprocess`
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn translate_stage(args: &TranslateArgs, settings: &Settings) -> CliResult<Report> {
    let input = StageIndex::load(&args.input)?;
    let backend = settings.backend()?;
    create_dir(&args.out)?;
    let items: Vec<(&String, &StageSample)> = input.samples.iter().collect();
    let results = Execution::default().map(&items, |&(id, sample)| {
        let run = || -> forge_core::Result<StageSample> {
            let x = FiveChannelInput::from_tensor(&read_tensor(args.input.join(&sample.tensor))?)?;
            let crop = translate(backend.as_ref(), &x)?.finalize(&x)?;
            let n = crop.width();
            let tensor = PathBuf::from(format!("{id}.tmf"));
            write_tensor(
                &Tensor::f32(vec![1, n, n], crop.into_data())?,
                args.out.join(&tensor),
            )?;
            Ok(StageSample {
                tensor,
                bbox: sample.bbox,
            })
        };
        run()
            .map(|t| (id.clone(), t))
            .map_err(|e| failure(id, input.modality, e))
    });
    let (done, failed) = split(results);
    let index = StageIndex {
        channels: vec!["value".into()],
        mode: Some(backend.mode()),
        backend: Some(backend.name().to_string()),
        samples: done.into_iter().collect(),
        ..input
    };
    let index_path = args.out.join(INDEX_FILE);
    write_json(&index_path, &index)?;
    Ok(Report {
        body: json!({
            "index": index_path,
            "backend": index.backend,
            "mode": index.mode,
            "written": index.samples.len(),
            "failures": failures_json(&failed),
        }),
        failures: failed.len(),
    })
}

#[derive(Debug, Args)]
pub struct CompositeArgs {
    /// Manifest the translated crops were made from
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory written by `translate`
    #[arg(long)]
    pub translated: PathBuf,
    /// Override the background recorded in the stage index
    #[arg(long)]
    pub background: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Updated manifest (default: <out>/manifest.json)
    #[arg(long)]
    pub out_manifest: Option<PathBuf>,
}

fn crop_plane(t: &Tensor) -> forge_core::Result<ImagePlane<f32>> {
    let data = t
        .as_f32()
        .ok_or_else(|| Error::Schema("translated crop must be f32".into()))?;
    match *t.dims() {
        [1, h, w] | [h, w] if h == w => ImagePlane::new(w, h, 1, data.to_vec()),
        ref d => Err(Error::DimMismatch(format!("translated crop dims {d:?}"))),
    }
}

pub fn composite_stage(args: &CompositeArgs, settings: &Settings) -> CliResult<Report> {
    let index = StageIndex::load(&args.translated)?;
    let modality = index.modality;
    let manifest = load_manifest(&args.manifest)?;
    let meta = settings.meta(modality, Some(&manifest));
    let bg_path = args
        .background
        .clone()
        .unwrap_or_else(|| index.background.clone());
    let bg = load_background(&bg_path, settings, modality, Some(&manifest))?;
    create_dir(&args.out.join(modality.as_str()))?;
    let results = Execution::default().map(&manifest.samples, |s| {
        let Some(sample) = index.samples.get(&s.id) else {
            return Ok(None);
        };
        let run = || -> forge_core::Result<PathBuf> {
            let mask = load_mask8(manifest.resolve(mask_path(s)?))?;
            let crop = crop_plane(&read_tensor(args.translated.join(&sample.tensor))?)?;
            let frame = composite(&bg, &crop, sample.bbox, &mask, settings.kernel)?;
            let rel = output_relpath(modality, &s.id);
            save_gray16(&denormalize(&frame, &meta)?, args.out.join(&rel))?;
            Ok(rel)
        };
        run()
            .map(|rel| Some((s.id.clone(), rel)))
            .map_err(|e| failure(&s.id, modality, e))
    });
    let (done, failed) = split(results);
    let written: BTreeMap<String, PathBuf> = done.into_iter().flatten().collect();

    let out_manifest = args
        .out_manifest
        .clone()
        .unwrap_or_else(|| args.out.join("manifest.json"));
    if let Some(p) = out_manifest.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(p)?;
    }
    let out_dir = canonical(&args.out)?;
    let relative_ok = out_manifest
        .parent()
        .map(|p| {
            if p.as_os_str().is_empty() {
                Path::new(".")
            } else {
                p
            }
        })
        .and_then(|p| std::fs::canonicalize(p).ok())
        .is_some_and(|p| p == out_dir);
    let mut updated = DatasetManifest::default();
    for s in &manifest.samples {
        let mut entry = absolutize(&manifest, s)?;
        if let Some(rel) = written.get(&s.id) {
            entry.set_modality(
                modality,
                if relative_ok {
                    rel.clone()
                } else {
                    out_dir.join(rel)
                },
            );
        }
        updated.samples.push(entry);
    }
    updated.modality_meta = manifest.modality_meta.clone();
    updated.modality_meta.insert(modality, meta);
    save_manifest(&updated, &out_manifest)?;
    Ok(Report {
        body: json!({
            "manifest": out_manifest,
            "modality": modality,
            "written": written.len(),
            "failures": failures_json(&failed),
        }),
        failures: failed.len(),
    })
}
