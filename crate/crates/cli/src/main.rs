//! Command-line front end: dataset generation, training, grid search,
//! cross-validation, evaluation, ablation and attention inspection.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::CommonArgs;

#[derive(Debug, Parser)]
#[command(
    name = "vidage",
    version,
    about = "Age estimation from facial expression videos"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset
    Gen {
        #[command(flatten)]
        common: CommonArgs,
        /// Generate the 1240-video replica instead of a plain synthetic set
        #[arg(long)]
        replica: bool,
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        frame_size: Option<usize>,
    },
    /// Train one model with a held-out validation fold
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Search hidden size, dropout and L2 strength on a validation fold
    Gridsearch {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Subject-disjoint k-fold cross-validation
    Crossval {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate a checkpoint on a dataset, or score a predictions CSV
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// CSV with columns video_id,subject_id,age,predicted
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Cross-validate every variant of the module ladder
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Write spatial attention PGMs and temporal CSVs for some videos
    AttnExport {
        #[command(flatten)]
        common: CommonArgs,
        /// Video ids to export; defaults to the first video
        #[arg(long, value_delimiter = ',')]
        videos: Vec<u64>,
    },
    /// Train every spatial mechanism at every insertion layer
    MechanismCompare {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen {
            common,
            replica,
            subjects,
            frame_size,
        } => commands::gen(common, *replica, *subjects, *frame_size),
        Command::Train { common } => commands::train(common),
        Command::Gridsearch { common } => commands::gridsearch(common),
        Command::Crossval { common } => commands::crossval(common),
        Command::Eval {
            common,
            predictions,
        } => commands::eval(common, predictions.as_deref()),
        Command::Ablate { common } => commands::ablate(common),
        Command::AttnExport { common, videos } => commands::attn_export(common, videos),
        Command::MechanismCompare { common } => commands::mechanism_compare(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
