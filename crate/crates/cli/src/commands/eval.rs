//! `forge eval` and `forge cls-metrics`.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use forge_core::metrics::{cls_metrics, fid, kid, kid_blocks, mse, Average, FeatureSet, KID_BLOCK};
use forge_core::model::{load_gray16, load_manifest, normalize, read_tensor, DatasetManifest};
use forge_core::{Error, Execution};
use serde::Deserialize;
use serde_json::json;

use super::{read_json, Report};
use crate::config::Settings;
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Manifest of real frames (paired with --synth by sample id)
    #[arg(long, requires = "synth")]
    pub real: Option<PathBuf>,
    #[arg(long, requires = "real")]
    pub synth: Option<PathBuf>,
    /// TMF1 [n, d] feature matrix of the real frames
    #[arg(long, requires = "features_synth")]
    pub features_real: Option<PathBuf>,
    #[arg(long, requires = "features_real")]
    pub features_synth: Option<PathBuf>,
    /// Also report KID over disjoint blocks
    #[arg(long)]
    pub kid_blocks: bool,
    #[arg(long, default_value_t = KID_BLOCK)]
    pub block_size: usize,
}

fn load_features(p: &PathBuf) -> CliResult<FeatureSet> {
    Ok(FeatureSet::from_tensor(&read_tensor(p)?)?)
}

/// Mean per-frame MSE over every synthesized frame, each paired with the
/// real frame of the same id and modality.
fn paired_mse(
    real: &DatasetManifest,
    synth: &DatasetManifest,
    settings: &Settings,
) -> CliResult<(Option<f64>, usize)> {
    let mut pairs = Vec::new();
    for m in settings.modalities() {
        for s in &synth.samples {
            let Some(sp) = s.modality(m) else { continue };
            let rp = real
                .sample(&s.id)
                .and_then(|r| r.modality(m))
                .ok_or_else(|| Error::MissingPair(format!("{} ({m})", s.id)))?;
            pairs.push((m, real.resolve(rp), synth.resolve(sp)));
        }
    }
    let values = Execution::default()
        .map(&pairs, |(m, rp, sp)| {
            let a = normalize(&load_gray16(rp)?, &settings.meta(*m, Some(real)))?;
            let b = normalize(&load_gray16(sp)?, &settings.meta(*m, Some(synth)))?;
            mse(&a, &b)
        })
        .into_iter()
        .collect::<forge_core::Result<Vec<f64>>>()?;
    let mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
    Ok((mean, values.len()))
}

pub fn eval(args: &EvalArgs, settings: &Settings) -> CliResult<Report> {
    if args.real.is_none() && args.features_real.is_none() {
        return Err(CliError::Invalid(
            "eval needs --real/--synth manifests, --features-real/--features-synth, or both".into(),
        ));
    }
    let mut body = json!({"fid": null, "kid": null, "mse_mean": null, "mse_pairs": 0, "n_real": null, "n_synth": null});
    if let (Some(r), Some(s)) = (&args.real, &args.synth) {
        let (real, synth) = (load_manifest(r)?, load_manifest(s)?);
        let (mean, n) = paired_mse(&real, &synth, settings)?;
        body["mse_mean"] = json!(mean);
        body["mse_pairs"] = json!(n);
        body["n_real"] = json!(real.samples.len());
        body["n_synth"] = json!(synth.samples.len());
    }
    if let (Some(r), Some(s)) = (&args.features_real, &args.features_synth) {
        let (a, b) = (load_features(r)?, load_features(s)?);
        body["fid"] = json!(fid(&a, &b)?);
        body["kid"] = json!(kid(&a, &b)?);
        body["n_real"] = json!(a.n());
        body["n_synth"] = json!(b.n());
        if args.kid_blocks {
            body["kid_blocks"] = json!(kid_blocks(&a, &b, args.block_size)?);
        }
    }
    Ok(Report::ok(body))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AverageKind {
    Macro,
    Binary,
}

#[derive(Debug, Args)]
pub struct ClsArgs {
    /// JSON {"pred": [...], "truth": [...], "classes"?: [...], "positive"?: "..."}
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub average: Option<AverageKind>,
    /// Positive class for binary averaging
    #[arg(long)]
    pub positive: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClsInput {
    pred: Vec<String>,
    truth: Vec<String>,
    #[serde(default)]
    classes: Option<Vec<String>>,
    #[serde(default)]
    positive: Option<String>,
}

pub fn cls(args: &ClsArgs) -> CliResult<Report> {
    let input: ClsInput = read_json(&args.input)?;
    let classes = input.classes.clone().unwrap_or_else(|| {
        let mut c: Vec<String> = input.truth.iter().chain(&input.pred).cloned().collect();
        c.sort();
        c.dedup();
        c
    });
    let positive = args.positive.clone().or(input.positive.clone());
    let average = match (args.average, positive) {
        (Some(AverageKind::Binary), None) => {
            return Err(CliError::Invalid(
                "binary averaging needs --positive".into(),
            ))
        }
        (Some(AverageKind::Macro), _) | (None, None) => Average::Macro,
        (_, Some(positive)) => Average::Binary { positive },
    };
    let report = cls_metrics(&input.pred, &input.truth, &classes, &average)?;
    Ok(Report::ok(json!(report)))
}
