//! `gatfolio` command line: synthetic data, features, training, backtests
//! and gradient checks driven by one JSON run config.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gatfolio::autodiff::AutodiffError;
use gatfolio::backtest::BacktestError;
use gatfolio::baselines::BaselineError;
use gatfolio::features::Version;
use gatfolio::hparam::SearchError;
use gatfolio::model::ModelError;
use gatfolio::pipeline::PipelineError;

use crate::commands::NumericalFailure;
use crate::config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "gatfolio", version, about = "LSTM + graph-attention portfolio allocation")]
struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Model version, v1..v5.
    #[arg(long, value_parser = parse_version)]
    version: Option<Version>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory holding the standard input CSVs (overrides the config's data section).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tickers: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
    },
    /// Compute the version's raw feature panel.
    Features {
        #[command(flatten)]
        common: Common,
    },
    /// Write the asset graph (static: training block; dynamic: as of a day).
    Graph {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        day: Option<usize>,
    },
    /// Train a model and save a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Run a random hyperparameter search with this many trials.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Backtest a checkpoint against equal-weight and CAPM-MVO on the test split.
    Backtest {
        #[command(flatten)]
        common: Common,
        /// Defaults to <out>/checkpoint.json.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print metric tables for saved reports; the first report is the model.
    Compare {
        /// Report JSON files (default: every report_*.json in --out).
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every autodiff primitive and the full model.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
}

fn parse_version(s: &str) -> Result<Version, String> {
    s.parse().map_err(|e: gatfolio::features::FeatureError| e.to_string())
}

fn resolve(common: &Common, trials: Option<usize>) -> anyhow::Result<RunConfig> {
    RunConfig::load(
        common.config.as_deref(),
        &Overrides {
            seed: common.seed,
            version: common.version,
            trials,
            out: common.out.clone(),
            data_dir: common.data.clone(),
        },
    )
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth { common, tickers, days } => {
            let mut c = resolve(&common, None)?;
            if let Some(t) = tickers {
                c.synth.tickers = t;
            }
            if let Some(d) = days {
                c.synth.days = d;
            }
            commands::synth(&c, common.force)
        }
        Command::Features { common } => commands::features(&resolve(&common, None)?, common.force),
        Command::Graph { common, day } => commands::graph(&resolve(&common, None)?, day, common.force),
        Command::Train { common, trials } => commands::train_cmd(&resolve(&common, trials)?, common.force),
        Command::Backtest { common, checkpoint } => commands::backtest(&resolve(&common, None)?, checkpoint.as_deref(), common.force),
        Command::Compare { reports, out } => {
            let files = if reports.is_empty() {
                commands::reports_in(&out.unwrap_or_else(|| PathBuf::from("run")))?
            } else {
                reports
            };
            commands::compare(&files)
        }
        Command::Gradcheck { seed, instances } => commands::gradcheck(seed, instances),
    }
}

fn model_numerical(e: &ModelError) -> bool {
    matches!(
        e,
        ModelError::Autodiff(_) | ModelError::NonFiniteGradient(_) | ModelError::Degenerate { .. }
    )
}

/// Exit code 2 for numerical failures, 1 for everything else.
fn is_numerical(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        if cause.is::<NumericalFailure>() || cause.is::<AutodiffError>() {
            return true;
        }
        if let Some(e) = cause.downcast_ref::<ModelError>() {
            return model_numerical(e);
        }
        if let Some(e) = cause.downcast_ref::<SearchError>() {
            return matches!(e, SearchError::AllFailed(_)) || matches!(e, SearchError::Model(m) if model_numerical(m));
        }
        if let Some(e) = cause.downcast_ref::<BacktestError>() {
            return matches!(e, BacktestError::NonFinite { .. } | BacktestError::ZeroVolatility);
        }
        if let Some(e) = cause.downcast_ref::<BaselineError>() {
            return matches!(e, BaselineError::NonFinite(_));
        }
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return match e {
                PipelineError::Model(m) => model_numerical(m),
                PipelineError::Backtest(b) => matches!(b, BacktestError::NonFinite { .. } | BacktestError::ZeroVolatility),
                PipelineError::Baseline(b) => matches!(b, BaselineError::NonFinite(_)),
                _ => false,
            };
        }
        false
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_numerical(&e) { 2 } else { 1 })
        }
    }
}
