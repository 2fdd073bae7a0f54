//! `racer` — reproducible pipelines for calibrated set-valued model routing.
//!
//! Subcommands: `synth`, `calibrate`, `route`, `eval`, `sweep`, `compare`,
//! `select-config`. Every command is a pure function of its input files and
//! flags; all randomness flows from a single `--seed`, with sub-seeds derived
//! by labeled hashing, and every emitted file is hashed into a run manifest.
//!
//! Exit codes: 0 success, 2 usage error, 3 infeasible risk level,
//! 4 pipeline mismatch, 1 anything else.

mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use racer_core::aggregation::AggregationError;
use racer_core::calibration::CalibrationError;
use racer_core::router::RouterError;

/// A flag combination clap cannot catch; exits with code 2.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Calibration file and flags disagree about the pipeline; exits with code 4.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct MismatchError(pub String);

#[derive(Parser)]
#[command(
    name = "racer",
    version,
    about = "Calibrated set-valued model routing with finite-sample risk control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic routing dataset with known model accuracies.
    Synth(SynthArgs),
    /// Calibrate the routing threshold for a target risk level.
    Calibrate(CalibrateArgs),
    /// Apply a calibration to new queries, optionally aggregating answers.
    Route(RouteArgs),
    /// Score routed sets (and outcomes) against their dataset.
    Eval(EvalArgs),
    /// Monte Carlo trials across a grid of risk levels and score kinds.
    Sweep(SweepArgs),
    /// Compare routed aggregation against calling every model.
    Compare(CompareArgs),
    /// Grid-search the risk level and aggregation method on validation data.
    SelectConfig(SelectConfigArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of queries to generate.
    #[arg(long)]
    n: usize,
    /// Pool size K.
    #[arg(long)]
    models: usize,
    /// Comma-separated per-model accuracies in `[0,1]`; must match --models.
    #[arg(long)]
    accuracies: String,
    /// Score concentration; higher separates correct from incorrect scores.
    #[arg(long, default_value_t = 2.0)]
    sharpness: f64,
    /// Informational target for the empty-ground-truth rate.
    #[arg(long)]
    empty_gt_rate: Option<f64>,
    #[arg(long)]
    seed: u64,
    /// Output JSONL path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Dataset to split; the calibration part is used. Mutually exclusive
    /// with --cal-input.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Use this whole file as the calibration set.
    #[arg(long)]
    cal_input: Option<PathBuf>,
    /// Input format: jsonl, csv, or auto (by extension).
    #[arg(long, default_value = "auto")]
    format: String,
    /// Min-max rescale scores into `[0,1]` instead of rejecting them.
    #[arg(long)]
    normalize: bool,
    /// Target risk level in (0,1).
    #[arg(long)]
    alpha: f64,
    /// Non-conformity score kind: gap or prob.
    #[arg(long)]
    score: String,
    #[arg(long)]
    seed: u64,
    /// cal,val,test fractions used with --input [default: 0.5,0.1,0.4].
    #[arg(long)]
    split: Option<String>,
    /// Output calibration JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RouteArgs {
    /// Calibration JSON produced by `racer calibrate`.
    #[arg(long)]
    calib: PathBuf,
    /// Queries to route.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "auto")]
    format: String,
    #[arg(long)]
    normalize: bool,
    /// Expected score kind; exits 4 if it disagrees with the calibration.
    #[arg(long)]
    score: Option<String>,
    /// Output JSONL of prediction sets.
    #[arg(long)]
    out: PathBuf,
    /// Aggregate member answers: majority or weighted.
    #[arg(long)]
    aggregate: Option<String>,
    /// Weight source for weighted aggregation: router_score or
    /// `confidence:<scheme>`.
    #[arg(long)]
    weight_scheme: Option<String>,
    /// Softmax temperature for weighted aggregation.
    #[arg(long)]
    temperature: Option<f64>,
    /// Output JSONL of aggregated outcomes (required with --aggregate).
    #[arg(long)]
    outcomes: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// The dataset slice the sets were routed from, same order.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "auto")]
    format: String,
    #[arg(long)]
    normalize: bool,
    /// Prediction-set JSONL from `racer route`.
    #[arg(long)]
    sets: PathBuf,
    /// Outcome JSONL from `racer route --aggregate`.
    #[arg(long)]
    outcomes: Option<PathBuf>,
    /// Output stem; writes `<out>.json` and `<out>.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "auto")]
    format: String,
    #[arg(long)]
    normalize: bool,
    /// Comma-separated risk levels.
    #[arg(long)]
    alphas: String,
    /// Comma-separated score kinds.
    #[arg(long, default_value = "gap,prob")]
    kinds: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// cal,val,test fractions; the validation part is held out once.
    #[arg(long, default_value = "0.5,0.1,0.4")]
    split: String,
    #[arg(long)]
    seed: u64,
    /// Output stem; writes `<out>.json`, `<out>.csv`, and `<out>_trials.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Test slice to compare on.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "auto")]
    format: String,
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    calib: PathBuf,
    /// Aggregation method: majority or weighted.
    #[arg(long)]
    aggregate: String,
    #[arg(long)]
    weight_scheme: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Output stem; writes `<out>.json` and `<out>.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectConfigArgs {
    /// Dataset to split into calibration/validation parts. Mutually
    /// exclusive with --cal-input/--val-input.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    cal_input: Option<PathBuf>,
    #[arg(long)]
    val_input: Option<PathBuf>,
    #[arg(long, default_value = "auto")]
    format: String,
    #[arg(long)]
    normalize: bool,
    /// cal,val,test fractions used with --input [default: 0.5,0.1,0.4].
    #[arg(long)]
    split: Option<String>,
    /// Comma-separated risk levels to search.
    #[arg(long)]
    alphas: String,
    /// Comma-separated methods: majority, weighted:router_score,
    /// `weighted:confidence:<scheme>`.
    #[arg(long, default_value = "majority,weighted:router_score")]
    methods: String,
    /// Temperature grid for weighted methods.
    #[arg(long, default_value = "0.25,0.5,1,2,4,8")]
    temperatures: String,
    /// Non-conformity score kind: gap or prob.
    #[arg(long)]
    score: String,
    #[arg(long)]
    seed: u64,
    /// Output JSON path for the selection report.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth(args),
        Command::Calibrate(args) => commands::calibrate(args),
        Command::Route(args) => commands::route(args),
        Command::Eval(args) => commands::eval(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::Compare(args) => commands::compare(args),
        Command::SelectConfig(args) => commands::select_config(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

/// RACER_THREADS caps internal parallelism; outputs do not depend on it.
fn configure_threads() -> Result<(), String> {
    match std::env::var("RACER_THREADS") {
        Ok(raw) => {
            let n: usize = raw
                .parse()
                .map_err(|_| format!("RACER_THREADS={raw:?} is not a thread count"))?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| e.to_string())
        }
        Err(_) => Ok(()),
    }
}

/// Map an error chain to the documented exit codes.
fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if matches!(
            cause.downcast_ref::<CalibrationError>(),
            Some(CalibrationError::AlphaInfeasible { .. })
        ) || matches!(
            cause.downcast_ref::<AggregationError>(),
            Some(AggregationError::AllAlphasInfeasible { .. })
        ) {
            return 3;
        }
        if cause.is::<MismatchError>()
            || matches!(
                cause.downcast_ref::<RouterError>(),
                Some(RouterError::KindMismatch { .. } | RouterError::SmoothingMismatch { .. })
            )
        {
            return 4;
        }
    }
    1
}
