//! `forge`: stage-wise and end-to-end driver for the synthesis pipeline.
//!
//! Every command prints one JSON document on stdout; logs go to stderr.
//! Exit codes: 0 success, 1 some samples failed, 2 invalid input or
//! configuration, 3 I/O or backend failure.

mod commands;
mod config;
mod error;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::eval::{ClsArgs, EvalArgs};
use commands::index::IndexArgs;
use commands::matching::MatchArgs;
use commands::stages::{CompositeArgs, PreprocessArgs, TranslateArgs};
use commands::synthesize::SynthesizeArgs;
use commands::Report;
use config::{PipelineArgs, Settings, SIDECAR_ENV};
use error::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "forge",
    version,
    about = "Synthesize depth and thermal frames from RGB + masks"
)]
struct Cli {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Embed frames into an EMB1 store
    Index(IndexArgs),
    /// Select the background closest to the query frames
    Match(MatchArgs),
    /// Build five-channel translation inputs
    Preprocess(PreprocessArgs),
    /// Run the translation backend over preprocessed inputs
    Translate(TranslateArgs),
    /// Blend translated crops into the background
    Composite(CompositeArgs),
    /// Run every stage for every sample and modality
    Synthesize(SynthesizeArgs),
    /// MSE between paired frames; FID and KID between feature sets
    Eval(EvalArgs),
    /// Accuracy, precision, recall and F1 from predicted labels
    ClsMetrics(ClsArgs),
}

fn dispatch(cmd: &Command, settings: &Settings) -> CliResult<Report> {
    match cmd {
        Command::Index(a) => commands::index::run(a, settings),
        Command::Match(a) => commands::matching::run(a, settings),
        Command::Preprocess(a) => commands::stages::preprocess(a, settings),
        Command::Translate(a) => commands::stages::translate_stage(a, settings),
        Command::Composite(a) => commands::stages::composite_stage(a, settings),
        Command::Synthesize(a) => commands::synthesize::run(a, settings),
        Command::Eval(a) => commands::eval::eval(a, settings),
        Command::ClsMetrics(a) => commands::eval::cls(a),
    }
}

#[cfg(feature = "parallel")]
fn with_workers(
    settings: &Settings,
    f: impl FnOnce() -> CliResult<Report> + Send,
) -> CliResult<Report> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .map_err(|e| {
            error::CliError::Invalid(format!("cannot start {} workers: {e}", settings.workers))
        })?;
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
fn with_workers(
    settings: &Settings,
    f: impl FnOnce() -> CliResult<Report> + Send,
) -> CliResult<Report> {
    if settings.workers > 1 {
        log::info!("built without the parallel feature; running on one thread");
    }
    f()
}

fn run(cli: &Cli) -> CliResult<Report> {
    let settings = Settings::resolve(&cli.pipeline, std::env::var(SIDECAR_ENV).ok())?;
    log::debug!("settings: {settings:?}");
    with_workers(&settings, || dispatch(&cli.command, &settings))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            let mut out = std::io::stdout().lock();
            let text = serde_json::to_string_pretty(&report.body).expect("serializable");
            if writeln!(out, "{text}").is_err() {
                return ExitCode::from(3);
            }
            if report.failures > 0 {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
