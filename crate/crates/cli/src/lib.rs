//! Command-line driver for the drug response pipeline.
//!
//! Every subcommand reads the outputs of earlier stages from one output
//! directory and records its own inputs, outputs and seeds in
//! `manifest.json` there.

pub mod config;
pub mod error;
pub mod manifest;
pub mod plot;
pub mod stages;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Overrides, RunConfig};
pub use error::CliError;
pub use stages::Stage;

#[derive(Debug, Parser)]
#[command(
    name = "drugnet",
    version,
    about = "Transfer-learned drug response prediction"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads. Changes speed only, never results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic unlabeled and labeled cohorts with planted effects.
    Synthesize,
    /// Align genes, filter low-expression genes and impute the response.
    Preprocess,
    /// Grid-search and pre-train the two autoencoders.
    Pretrain,
    /// Train the full model on a train/validation/test split.
    Train,
    /// Predict the response of the configured cohort.
    Predict,
    /// Score the trained model on each split subset.
    Evaluate,
    /// Per-cancer and pan-cancer mutation–drug association scans.
    Scan,
    /// Profile the extreme responders of each drug.
    Profile {
        /// Drug to profile (repeatable); overrides the config.
        #[arg(long)]
        drug: Vec<String>,
    },
    /// Repeat the model comparison over reshuffled splits.
    Compare,
    /// Render density, correlation and waterfall SVGs.
    Plot {
        /// Drug for the density and waterfall plots.
        #[arg(long)]
        drug: Option<String>,
    },
}

impl Command {
    pub fn stage(&self) -> Stage {
        match self {
            Command::Synthesize => Stage::Synthesize,
            Command::Preprocess => Stage::Preprocess,
            Command::Pretrain => Stage::Pretrain,
            Command::Train => Stage::Train,
            Command::Predict => Stage::Predict,
            Command::Evaluate => Stage::Evaluate,
            Command::Scan => Stage::Scan,
            Command::Profile { .. } => Stage::Profile,
            Command::Compare => Stage::Compare,
            Command::Plot { .. } => Stage::Plot,
        }
    }
}

/// Runs one parsed command on a dedicated thread pool.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let drugs = match &cli.command {
        Command::Profile { drug } => drug.clone(),
        Command::Plot { drug } => drug.iter().cloned().collect(),
        _ => vec![],
    };
    let overrides = Overrides {
        seed: cli.global.seed,
        out: cli.global.out.clone(),
        drugs,
    };
    let cfg = RunConfig::resolve(cli.global.config.as_deref(), &overrides)?;
    let threads = match cli.global.threads {
        Some(0) => return Err(CliError::validation("--threads must be at least 1")),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::validation(format!("cannot start {threads} threads: {e}")))?;
    pool.install(|| stages::run_stage(cli.command.stage(), &cfg))
}
