//! `nmnf`: generate synthetic corpora, train and evaluate the dual-memory
//! forecaster, run the ablation and sensitivity studies, verify gradients,
//! and plot reports.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data/format error,
//! 3 numerical failure (non-finite loss or a failed gradient check).

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nmnf_core::Error;

#[derive(Parser)]
#[command(name = "nmnf", version, about = "Dual-memory action sequence forecaster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus from an action grammar.
    Generate {
        /// Output corpus directory.
        #[arg(long)]
        out: PathBuf,
        /// Built-in grammar: `cycle3` or `composed8`.
        #[arg(long, default_value = "composed8", conflicts_with = "grammar")]
        preset: String,
        /// Grammar TOML file (instead of a preset).
        #[arg(long)]
        grammar: Option<PathBuf>,
        /// Config file with a [corpus] table.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model on a generated corpus and write a checkpoint.
    Train {
        /// Corpus directory produced by `generate`.
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory for the checkpoint and loss curve.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ablation variant: a, b, c, d, e or full.
        #[arg(long, default_value = "full")]
        variant: String,
    },
    /// Evaluate a checkpoint over the observed/predicted protocol grid.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        /// Checkpoint written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train and evaluate every ablation variant at one protocol cell.
    Ablate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated training seeds.
        #[arg(long, default_value = "1,2,3")]
        seeds: String,
        #[arg(long, default_value_t = 0.3)]
        obs: f64,
        #[arg(long, default_value_t = 0.5)]
        pred: f64,
    },
    /// Sensitivity to corrupted observed labels at one protocol cell.
    Sensitivity {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "1,2,3")]
        seeds: String,
        /// Comma-separated corruption probabilities.
        #[arg(long, default_value = "0,0.1,0.3")]
        levels: String,
        #[arg(long, default_value_t = 0.3)]
        obs: f64,
        #[arg(long, default_value_t = 0.5)]
        pred: f64,
    },
    /// Check model gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Render accuracy-vs-predicted-fraction lines from a report CSV.
    Plot {
        /// Report CSV produced by `eval`, `ablate` or `sensitivity`.
        #[arg(long)]
        report: PathBuf,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Contract(_) | Error::Dimension { .. } => 1,
        Error::Format { .. } | Error::Io(_) | Error::Protocol(_) => 2,
        Error::Training { .. } | Error::Evaluation(_) => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 0 for --help/--version, 1 for usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate { out, preset, grammar, config, seed } => {
            commands::generate(&out, &preset, grammar.as_deref(), config.as_deref(), seed)
        }
        Command::Train { corpus, out, config, seed, variant } => {
            commands::train(&corpus, &out, config.as_deref(), seed, &variant)
        }
        Command::Eval { corpus, model, out, config, seed } => {
            commands::eval(&corpus, &model, &out, config.as_deref(), seed)
        }
        Command::Ablate { corpus, out, config, seeds, obs, pred } => {
            commands::ablate(&corpus, &out, config.as_deref(), &seeds, obs, pred)
        }
        Command::Sensitivity { corpus, out, config, seeds, levels, obs, pred } => {
            commands::sensitivity(&corpus, &out, config.as_deref(), &seeds, &levels, obs, pred)
        }
        Command::Gradcheck { seed } => commands::gradcheck(seed),
        Command::Plot { report, out } => commands::plot_report(&report, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
