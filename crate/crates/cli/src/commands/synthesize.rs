//! `forge synthesize`: match, preprocess, translate and composite every
//! sample for every requested modality.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use forge_core::embed::Embedder;
use forge_core::model::{
    load_gray16, load_manifest, load_rgb8, normalize, save_manifest, DatasetManifest, Modality,
    ModalityMeta,
};
use forge_core::pipeline::{Background, BackgroundAssignment, SynthesisJob};
use forge_core::retrieval::{
    aggregate, load_store, score_all, select_background, EmbeddingStore, Selection,
};
use forge_core::Execution;
use serde_json::{json, Value};

use super::{create_dir, failures_json, list_pngs, stem_id, Report};
use crate::config::Settings;
use crate::error::{CliError, CliResult};

fn parse_store_arg(s: &str) -> Result<(Modality, PathBuf), String> {
    let (m, p) = s
        .split_once('=')
        .ok_or_else(|| format!("expected MODALITY=PATH, got {s:?}"))?;
    Ok((
        m.parse().map_err(|e: forge_core::Error| e.to_string())?,
        PathBuf::from(p),
    ))
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    /// Manifest with rgb + mask per sample
    #[arg(long)]
    pub manifest: PathBuf,
    /// Background pool: `<bg-dir>/depth/*.png`, `<bg-dir>/thermal/*.png`
    #[arg(long)]
    pub bg_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Output manifest (default: <out>/manifest.json)
    #[arg(long)]
    pub out_manifest: Option<PathBuf>,
    /// Precomputed EMB1 store for the RGB frames, keyed by sample id
    #[arg(long)]
    pub query_store: Option<PathBuf>,
    /// Precomputed EMB1 store for a background pool, keyed by file stem
    #[arg(long = "bg-store", value_parser = parse_store_arg)]
    pub bg_stores: Vec<(Modality, PathBuf)>,
}

struct Pool {
    files: Vec<PathBuf>,
    store: EmbeddingStore,
}

fn embed_pool(
    dir: &Path,
    store: Option<&PathBuf>,
    embedder: &Embedder,
    meta: &ModalityMeta,
) -> CliResult<Pool> {
    let files = list_pngs(dir)?;
    if files.is_empty() {
        return Err(CliError::Invalid(format!(
            "background pool {} is empty",
            dir.display()
        )));
    }
    let store = match store {
        Some(p) => {
            let s = load_store(p)?;
            // align rows with the files on disk
            let rows = files
                .iter()
                .map(|f| {
                    let id = stem_id(f);
                    let i = s.index_of(&id).ok_or_else(|| {
                        CliError::Invalid(format!(
                            "{} has no embedding for background {id}",
                            p.display()
                        ))
                    })?;
                    Ok((id, s.row(i).to_vec()))
                })
                .collect::<CliResult<Vec<_>>>()?;
            EmbeddingStore::from_rows(rows)?
        }
        None => {
            let rows = Execution::default()
                .map(&files, |f| {
                    Ok((stem_id(f), embedder.embed_gray16(&load_gray16(f)?, meta)?))
                })
                .into_iter()
                .collect::<forge_core::Result<Vec<_>>>()?;
            EmbeddingStore::from_rows(rows)?
        }
    };
    Ok(Pool { files, store })
}

/// Query embeddings keyed by sample id. Samples whose RGB cannot be read
/// are left out here and reported by the synthesis run.
fn query_store(
    manifest: &DatasetManifest,
    store: Option<&PathBuf>,
    embedder: &Embedder,
) -> CliResult<EmbeddingStore> {
    if let Some(p) = store {
        let s = load_store(p)?;
        let rows: Vec<_> = manifest
            .samples
            .iter()
            .filter_map(|e| s.index_of(&e.id).map(|i| (e.id.clone(), s.row(i).to_vec())))
            .collect();
        if rows.is_empty() {
            return Err(CliError::Invalid(format!(
                "{} has no embeddings for manifest samples",
                p.display()
            )));
        }
        return Ok(EmbeddingStore::from_rows(rows)?);
    }
    let rows: Vec<_> = Execution::default()
        .map(&manifest.samples, |s| {
            load_rgb8(manifest.resolve(&s.rgb))
                .and_then(|img| embedder.embed_rgb(&img))
                .map(|v| (s.id.clone(), v))
        })
        .into_iter()
        .filter_map(Result::ok)
        .collect();
    if rows.is_empty() {
        return Err(CliError::Invalid(
            "no readable RGB frames in manifest".into(),
        ));
    }
    Ok(EmbeddingStore::from_rows(rows)?)
}

fn selection_json(sel: &Selection) -> Value {
    json!({"id": sel.id, "index": sel.index, "score": sel.score})
}

pub fn run(args: &SynthesizeArgs, settings: &Settings) -> CliResult<Report> {
    let manifest = load_manifest(&args.manifest)?;
    let modalities = settings.modalities();
    let metas: BTreeMap<Modality, ModalityMeta> = modalities
        .iter()
        .map(|&m| (m, settings.meta(m, Some(&manifest))))
        .collect();
    let bg_stores: BTreeMap<Modality, PathBuf> = args.bg_stores.iter().cloned().collect();

    let mut assignment = BackgroundAssignment::default();
    let mut chosen = serde_json::Map::new();
    {
        let embedder = settings.embedder()?;
        let pools = modalities
            .iter()
            .map(|&m| {
                let pool = embed_pool(
                    &args.bg_dir.join(m.as_str()),
                    bg_stores.get(&m),
                    &embedder,
                    &metas[&m],
                )?;
                Ok((m, pool))
            })
            .collect::<CliResult<Vec<_>>>()?;
        let queries = query_store(&manifest, args.query_store.as_ref(), &embedder)?;
        for (m, pool) in &pools {
            let scores = score_all(&queries, &pool.store)?;
            let mut cache: BTreeMap<usize, Arc<Background>> = BTreeMap::new();
            let mut load = |sel: &Selection| -> CliResult<Arc<Background>> {
                if let Some(bg) = cache.get(&sel.index) {
                    return Ok(bg.clone());
                }
                let path = pool.files[sel.index].clone();
                let frame = normalize(&load_gray16(&path)?, &metas[m])?;
                let bg = Arc::new(Background {
                    id: sel.id.clone(),
                    path,
                    frame,
                });
                cache.insert(sel.index, bg.clone());
                Ok(bg)
            };
            if settings.per_frame {
                let mut per = serde_json::Map::new();
                for (id, sv) in queries.ids().iter().zip(&scores) {
                    let sel = select_background(sv, &pool.store, settings.select)?;
                    assignment.set_for_sample(id.clone(), *m, load(&sel)?);
                    per.insert(id.clone(), selection_json(&sel));
                }
                chosen.insert(m.to_string(), Value::Object(per));
            } else {
                let sel = select_background(&aggregate(&scores)?, &pool.store, settings.select)?;
                assignment.set_default(*m, load(&sel)?);
                chosen.insert(m.to_string(), selection_json(&sel));
            }
        }
    }

    let backend = settings.backend()?;
    create_dir(&args.out)?;
    let report = SynthesisJob {
        manifest: &manifest,
        modalities: modalities.clone(),
        backgrounds: &assignment,
        metas: &metas,
        backend: backend.as_ref(),
        params: settings.params(),
        out_dir: &args.out,
    }
    .run(Execution::default())?;

    let out_manifest = args
        .out_manifest
        .clone()
        .unwrap_or_else(|| args.out.join("manifest.json"));
    let mut out = report.manifest;
    let out_dir = std::fs::canonicalize(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let manifest_dir = out_manifest
        .parent()
        .map(|p| {
            if p.as_os_str().is_empty() {
                Path::new(".")
            } else {
                p
            }
        })
        .map(|p| {
            create_dir(p)?;
            std::fs::canonicalize(p).map_err(|e| CliError::io(p, e))
        })
        .transpose()?;
    if manifest_dir.as_deref() != Some(out_dir.as_path()) {
        for s in &mut out.samples {
            for m in Modality::ALL {
                if let Some(p) = s.modality(m).map(|p| out_dir.join(p)) {
                    s.set_modality(m, p);
                }
            }
        }
    }
    save_manifest(&out, &out_manifest)?;
    if !report.failures.is_empty() {
        log::warn!("{} sample/modality pair(s) failed", report.failures.len());
    }
    Ok(Report {
        body: json!({
            "manifest": out_manifest,
            "samples": out.samples.len(),
            "written": report.written,
            "backgrounds": chosen,
            "failures": failures_json(&report.failures),
        }),
        failures: report.failures.len(),
    })
}
