//! The `pipeforge` command line: self-play training, pipeline search, trace explanation
//! and benchmarking.

mod benchmark;
mod explain;
mod search;
mod selfplay;
mod setup;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use setup::EVALUATOR_ENV;

#[derive(Debug, Parser)]
#[command(name = "pipeforge", version, about = "Search-guided synthesis of tabular ML pipelines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network by self-play on the datasets of an experiment config.
    Selfplay(SelfplayArgs),
    /// Synthesize a pipeline for one dataset with a trained network.
    Search(SearchArgs),
    /// Narrate a game trace and check that it replays.
    Explain(ExplainArgs),
    /// Compare the engine against the SGD baseline and random search.
    Benchmark(BenchmarkArgs),
}

/// Knobs shared by the commands that run searches; each overrides the config value.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub simulations: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SelfplayArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Starting network; a fresh seeded network when absent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "pipeforge-out")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub games: Option<usize>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Task spec JSON; defaults to `<dataset stem>.task.json` beside the dataset.
    #[arg(long)]
    pub task: Option<PathBuf>,
    /// Experiment config supplying catalog and search settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Catalog document; overrides the config's.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long, default_value = "pipeforge-out")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    pub trace: PathBuf,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Length limit of the catalog the trace was played with; read from the trace when absent.
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Network to benchmark; overrides the config's.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "pipeforge-out")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input, missing files, unreadable checkpoints.
    #[error("{0}")]
    Usage(String),
    /// The command ran but its task failed.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

pub(crate) fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

pub(crate) fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

/// Runs a parsed command, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Selfplay(a) => selfplay::run(a, out),
        Command::Search(a) => search::run(a, out),
        Command::Explain(a) => explain::run(a, out),
        Command::Benchmark(a) => benchmark::run(a, out),
    }
}
