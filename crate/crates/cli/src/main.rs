//! `conformal-triage`: generate data, fit and calibrate, predict with
//! uncertainty, simulate expert corrections, and export diagnostics.
//!
//! Every command takes an optional `--config run.json` plus flag overrides
//! (flags win), writes deterministic outputs plus a `manifest.json`, and
//! exits 0 on success, 1 on validation/config errors, 2 on I/O errors, and
//! 3 on numerical failures. `CONFORMAL_TRIAGE_THREADS` caps the worker pool
//! (0 or unset = automatic); outputs do not depend on the thread count.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use conformal_triage_core::{Result, TriageError, WireFormat};

mod commands;
mod config;

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "conformal-triage", version)]
#[command(about = "Conformal uncertainty and expert-correction triage for soil-profile predictions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// JSON run configuration; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed for generation, training, and the sweep.
    #[arg(long)]
    seed: Option<u64>,
}

/// Flags for commands that read a dataset and prior artifacts.
#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Dataset path: a JSON-lines file or a CSV-pair directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Directory with calibration/model artifacts from `calibrate`.
    #[arg(long)]
    artifacts: Option<PathBuf>,
    /// Interval scale source: `fit` (stored model) or `column`.
    #[arg(long)]
    residual_mode: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic soil-profile dataset.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        /// Wire format: `jsonl` or `csv-pair`.
        #[arg(long, default_value = "jsonl")]
        format: String,
        /// Profile count override.
        #[arg(long)]
        n_profiles: Option<usize>,
    },
    /// Fit residual scales and calibrate both tasks.
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Miscoverage level override.
        #[arg(long)]
        alpha: Option<f64>,
        /// Residual training epochs override.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Write per-unit intervals, label sets, and uncertainty rankings.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Split to score (train/val/calib/test).
        #[arg(long)]
        split: Option<String>,
    },
    /// Run the correction budget sweep on the test split.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Random-baseline replication override.
        #[arg(long)]
        replications: Option<usize>,
        /// Also write SVG plots.
        #[arg(long)]
        svg: bool,
    },
    /// Export reliability, coverage, score CDFs, and deferral thresholds.
    Diagnose {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Uncertainty source for thresholds (e.g. entropy, conformal_width).
        #[arg(long)]
        source: Option<String>,
        /// Comma-separated relative deferral budgets.
        #[arg(long)]
        budgets: Option<String>,
        /// Also write SVG plots.
        #[arg(long)]
        svg: bool,
    },
    /// Infer deferral thresholds for the configured budgets.
    Threshold {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Uncertainty source for thresholds (e.g. entropy, conformal_width).
        #[arg(long)]
        source: Option<String>,
        /// Comma-separated relative deferral budgets.
        #[arg(long)]
        budgets: Option<String>,
    },
}

fn overrides(common: &CommonArgs, data: Option<&DataArgs>) -> Overrides {
    Overrides {
        data: data.and_then(|d| d.data.clone()),
        artifacts: data.and_then(|d| d.artifacts.clone()),
        out: common.out.clone(),
        seed: common.seed,
        residual_mode: data.and_then(|d| d.residual_mode.clone()),
        ..Overrides::default()
    }
}

fn load_config(common: &CommonArgs, ov: Overrides) -> Result<RunConfig> {
    RunConfig::load(common.config.as_deref())?.apply(&ov)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, format, n_profiles } => {
            let format: WireFormat = format.parse()?;
            let mut ov = overrides(&common, None);
            ov.n_profiles = n_profiles;
            commands::cmd_generate(&load_config(&common, ov)?, format)
        }
        Command::Calibrate { common, data, alpha, epochs } => {
            let mut ov = overrides(&common, Some(&data));
            ov.alpha = alpha;
            ov.epochs = epochs;
            commands::cmd_calibrate(&load_config(&common, ov)?)
        }
        Command::Predict { common, data, split } => {
            let mut ov = overrides(&common, Some(&data));
            ov.predict_split = split;
            commands::cmd_predict(&load_config(&common, ov)?)
        }
        Command::Simulate { common, data, replications, svg } => {
            let mut ov = overrides(&common, Some(&data));
            ov.replications = replications;
            commands::cmd_simulate(&load_config(&common, ov)?, svg)
        }
        Command::Diagnose { common, data, source, budgets, svg } => {
            let mut ov = overrides(&common, Some(&data));
            ov.threshold_source = source;
            ov.budgets = budgets;
            commands::cmd_diagnose(&load_config(&common, ov)?, svg)
        }
        Command::Threshold { common, data, source, budgets } => {
            let mut ov = overrides(&common, Some(&data));
            ov.threshold_source = source;
            ov.budgets = budgets;
            commands::cmd_threshold(&load_config(&common, ov)?)
        }
    }
}

/// Applies `CONFORMAL_TRIAGE_THREADS` before any parallel work starts.
fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("CONFORMAL_TRIAGE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .map_err(|_| TriageError::Config(format!("CONFORMAL_TRIAGE_THREADS=`{raw}` is not a number")))?;
    if n == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| TriageError::Config(format!("thread pool: {e}")))
}

fn exit_code(e: &TriageError) -> u8 {
    match e {
        TriageError::Io { .. } => 2,
        TriageError::NumericalDivergence { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let usage_only = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return ExitCode::from(if usage_only { 0 } else { 1 });
        }
    };
    match init_threads().and_then(|()| dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
