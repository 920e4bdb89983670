//! `forge match`: pick the background closest to a set of query frames.

use std::path::PathBuf;

use clap::Args;
use forge_core::retrieval::{aggregate, load_store, score_all, select_background};
use serde_json::{json, Value};

use super::Report;
use crate::config::Settings;
use crate::error::CliResult;

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// EMB1 store of candidate background frames
    #[arg(long)]
    pub bg_store: PathBuf,
    /// EMB1 store of query (RGB) frames
    #[arg(long)]
    pub query_store: PathBuf,
    /// Include the full averaged score vector
    #[arg(long)]
    pub scores: bool,
}

pub fn run(args: &MatchArgs, settings: &Settings) -> CliResult<Report> {
    let targets = load_store(&args.bg_store)?;
    let queries = load_store(&args.query_store)?;
    let per_query = score_all(&queries, &targets)?;
    if settings.per_frame {
        let frames = queries
            .ids()
            .iter()
            .zip(&per_query)
            .map(|(q, sv)| {
                let sel = select_background(sv, &targets, settings.select)?;
                Ok(json!({
                    "query_id": q,
                    "selected_id": sel.id,
                    "selected_index": sel.index,
                    "score": sel.score,
                }))
            })
            .collect::<forge_core::Result<Vec<Value>>>()?;
        return Ok(Report::ok(
            json!({ "select": settings.select, "frames": frames }),
        ));
    }
    let avg = aggregate(&per_query)?;
    let sel = select_background(&avg, &targets, settings.select)?;
    let mut body = json!({
        "selected_id": sel.id,
        "selected_index": sel.index,
        "mean_score": sel.score,
        "select": settings.select,
    });
    if args.scores {
        body["scores"] = json!(avg.0);
    }
    Ok(Report::ok(body))
}
