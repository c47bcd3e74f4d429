mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deepconn_core::verify::{SuiteOptions, DEFAULT_EPS, DEFAULT_THRESHOLD};
use deepconn_core::Error;

use crate::commands::VerificationFailed;
use crate::config::RunArgs;

/// Review-text rating prediction with twin CNN/LSTM/GRU towers.
#[derive(Parser)]
#[command(name = "deepconn", version)]
struct Cli {
    /// TOML file of defaults; command-line flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count reviews, users and items
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        json: bool,
    },
    /// Train a model; writes report.json, loss.csv and checkpoints
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "run")]
        out_dir: PathBuf,
    },
    /// Test MSE of a saved checkpoint
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        json: bool,
    },
    /// Item-item collaborative filtering
    Baseline {
        #[command(flatten)]
        run: RunArgs,
        /// Predict one pair, given as user:item (repeatable)
        #[arg(long = "query")]
        queries: Vec<String>,
        /// Write the item similarity matrix as a tab-separated table
        #[arg(long)]
        export_sims: Option<PathBuf>,
    },
    /// Train the network and the CF baseline on the same split
    Compare {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Finite-difference check of every layer and the miniature model
    Gradcheck {
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Scale analytic gradients before comparing (debugging aid)
        #[arg(long, default_value_t = 1.0, hide = true)]
        corrupt_scale: f64,
    },
    /// Rewrite the loss curve of a report (JSON or CSV) as CSV
    ExportCurves {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Include the seconds column
        #[arg(long)]
        timing: bool,
    },
}

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3; // also malformed input files
const EXIT_NUMERIC: u8 = 4;
const EXIT_VERIFY: u8 = 5;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<VerificationFailed>().is_some() {
        return EXIT_VERIFY;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::InvalidConfig(_) | Error::InfeasibleSplit(_)) => EXIT_CONFIG,
        Some(Error::Io { .. } | Error::Stream(_) | Error::Parse { .. } | Error::Format { .. }) => {
            EXIT_IO
        }
        Some(Error::NumericFault(_)) => EXIT_NUMERIC,
        _ => EXIT_OTHER,
    }
}

fn layered(file: &Option<PathBuf>, cli: &RunArgs) -> anyhow::Result<RunArgs> {
    let base = match file {
        Some(p) => RunArgs::from_file(p)?,
        None => RunArgs::default(),
    };
    Ok(base.overlay(cli))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Stats { data, strict, json } => commands::stats(&data, strict, json),
        Command::Train { run, out_dir } => {
            commands::train(&layered(&cli.config, &run)?, Some(&out_dir)).map(|_| ())
        }
        Command::Evaluate {
            checkpoint,
            run,
            json,
        } => commands::evaluate_checkpoint(&checkpoint, &layered(&cli.config, &run)?, json),
        Command::Baseline {
            run,
            queries,
            export_sims,
        } => commands::baseline(
            &layered(&cli.config, &run)?,
            &queries,
            export_sims.as_deref(),
        ),
        Command::Compare { run, out_dir } => {
            commands::compare(&layered(&cli.config, &run)?, out_dir.as_deref())
        }
        Command::Gradcheck {
            eps,
            threshold,
            corrupt_scale,
        } => commands::gradcheck(&SuiteOptions {
            eps,
            threshold,
            grad_scale: corrupt_scale,
        }),
        Command::ExportCurves {
            report,
            out,
            timing,
        } => commands::export_curves(&report, &out, timing),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
