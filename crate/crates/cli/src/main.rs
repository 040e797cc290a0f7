//! `zsgan`: synthetic data generation, training, feature synthesis and
//! zero-shot evaluation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "zsgan", version, about = "Adversarial zero-shot feature synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run config; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for data, training and splits.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset directory (overrides `dataset`).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Number of seen/unseen splits for the protocol.
    #[arg(long)]
    splits: Option<usize>,
    /// Write PCA coordinates of the bank and the unseen test rows.
    #[arg(long)]
    export_2d: bool,
    /// Train the SVM on real seen rows as well as the bank.
    #[arg(long)]
    include_seen_in_svm: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark with a known embedding-to-feature map.
    GenData(Common),
    /// Train on the seen categories of one split.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from the checkpoint in the checkpoint directory.
        #[arg(long)]
        resume: bool,
    },
    /// Synthesize a feature bank for the unseen categories of a checkpoint.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint, or run the split protocol when none is given.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the protocol for all four loss ablations.
    Ablate(Common),
}

fn resolve(c: &Common, checkpoint: Option<PathBuf>) -> zsgan_core::Result<RunConfig> {
    RunConfig::load(c.config.as_deref())?.resolve(&Overrides {
        seed: c.seed,
        out: c.out.clone(),
        dataset: c.dataset.clone(),
        checkpoint,
        splits: c.splits,
        export_2d: c.export_2d,
        include_seen_in_svm: c.include_seen_in_svm,
    })
}

fn run(cmd: Command) -> zsgan_core::Result<()> {
    match cmd {
        Command::GenData(c) => commands::gen_data(&resolve(&c, None)?),
        Command::Train { common, resume } => commands::train_cmd(&resolve(&common, None)?, resume),
        Command::Synth { common, checkpoint } => commands::synth(&resolve(&common, checkpoint)?),
        Command::Eval { common, checkpoint } => commands::eval(&resolve(&common, checkpoint)?),
        Command::Ablate(c) => commands::ablate(&resolve(&c, None)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
