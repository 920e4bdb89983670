//! `forge index`: embed frames into an EMB1 store.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use forge_core::model::{load_gray16, load_manifest, load_rgb8, Modality};
use forge_core::retrieval::{save_store, EmbeddingStore};
use forge_core::Execution;
use serde_json::json;

use super::{list_pngs, stem_id, Report};
use crate::config::Settings;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FrameKind {
    Rgb,
    Depth,
    Thermal,
}

impl FrameKind {
    fn modality(self) -> Option<Modality> {
        match self {
            FrameKind::Rgb => None,
            FrameKind::Depth => Some(Modality::Depth),
            FrameKind::Thermal => Some(Modality::Thermal),
        }
    }
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Directory of PNG frames (ids are file stems) or a manifest JSON
    #[arg(long)]
    pub input: PathBuf,
    /// Output EMB1 store
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "rgb")]
    pub kind: FrameKind,
}

pub fn run(args: &IndexArgs, settings: &Settings) -> CliResult<Report> {
    let manifest = if args.input.is_dir() {
        None
    } else {
        Some(load_manifest(&args.input)?)
    };
    let frames: Vec<(String, PathBuf)> = match &manifest {
        None => list_pngs(&args.input)?
            .into_iter()
            .map(|p| (stem_id(&p), p))
            .collect(),
        Some(m) => m
            .samples
            .iter()
            .filter_map(|s| {
                let p = match args.kind.modality() {
                    None => Some(s.rgb.as_path()),
                    Some(modality) => s.modality(modality),
                };
                p.map(|p| (s.id.clone(), m.resolve(p)))
            })
            .collect(),
    };
    if frames.is_empty() {
        return Err(CliError::Invalid(format!(
            "no frames found in {}",
            args.input.display()
        )));
    }
    let meta = args
        .kind
        .modality()
        .map(|m| settings.meta(m, manifest.as_ref()));
    let embedder = settings.embedder()?;
    let rows = Execution::default()
        .map(&frames, |(id, path)| {
            let v = match &meta {
                None => embedder.embed_rgb(&load_rgb8(path)?)?,
                Some(meta) => embedder.embed_gray16(&load_gray16(path)?, meta)?,
            };
            Ok((id.clone(), v))
        })
        .into_iter()
        .collect::<forge_core::Result<Vec<_>>>()?;
    let store = EmbeddingStore::from_rows(rows)?;
    save_store(&store, &args.out)?;
    Ok(Report::ok(json!({
        "out": args.out,
        "count": store.len(),
        "dim": store.dim(),
    })))
}
