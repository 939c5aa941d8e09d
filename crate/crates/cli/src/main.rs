//! `supclust` command-line tool: generate synthetic embeddings, run one-shot
//! queries, simulate active-learning runs and summarize them.

mod commands;
mod error;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "supclust", version, about = "Active-learning query engine for embedding pools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled Gaussian-blob dataset with long-tail class imbalance.
    GenData(GenDataArgs),
    /// Select samples to annotate next.
    Query(QueryArgs),
    /// Simulate active-learning runs over several strategies and seeds.
    Simulate(SimulateArgs),
    /// Summarize the records written by `simulate`.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FileFormat {
    Csv,
    Raw,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub classes: usize,
    #[arg(long)]
    pub max_per_class: usize,
    /// Ratio between the largest and the smallest class.
    #[arg(long, default_value_t = 1.0)]
    pub imbalance: f64,
    #[arg(long)]
    pub dim: usize,
    /// Class centers are drawn from [-spread, spread]^dim.
    #[arg(long, default_value_t = 1.0)]
    pub center_spread: f64,
    #[arg(long, default_value_t = 0.35)]
    pub cluster_std: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output format; defaults to csv for `.csv` paths and raw otherwise.
    #[arg(long, value_enum)]
    pub format: Option<FileFormat>,
    #[arg(short, long)]
    pub output: PathBuf,
}

/// Parameters shared by `query` and `simulate`.
#[derive(Debug, Args, Clone)]
pub struct StrategyArgs {
    /// Softmax temperature of the cluster weights.
    #[arg(long = "temperature", short = 'T', default_value_t = 1.0)]
    pub temperature: f64,
    /// Upper bound on the typicality neighbour count.
    #[arg(long = "typicality-k", short = 'K', default_value_t = 20)]
    pub typicality_k: usize,
    /// Fraction of each cluster kept by the typicality filter.
    #[arg(long, default_value_t = 0.1)]
    pub filter_fraction: f64,
    /// ProbCover ball radius; defaults to the median nearest-neighbour distance.
    #[arg(long)]
    pub probcover_radius: Option<f64>,
    #[arg(long, value_parser = ["cluster", "global"], default_value = "cluster")]
    pub neighbor_scope: String,
    #[arg(long, value_parser = ["none", "l2"], default_value = "none")]
    pub normalize: String,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub strategy: String,
    #[arg(long)]
    pub budget: usize,
    /// Newline-separated indices of already labeled samples.
    #[arg(long)]
    pub labeled: Option<PathBuf>,
    /// CSV of class probabilities, one row per sample (uncertainty strategies).
    #[arg(long)]
    pub proba_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub strategy_args: StrategyArgs,
    /// Write indices here instead of standard output.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub dataset: PathBuf,
    /// Comma-separated strategy names.
    #[arg(long, value_delimiter = ',', default_value = "supclust,random")]
    pub strategies: Vec<String>,
    #[arg(long, value_parser = ["tiny", "small", "custom"], default_value = "tiny")]
    pub regime: String,
    /// Per-step query size for the custom regime.
    #[arg(long)]
    pub step_size: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub steps: usize,
    /// Number of seeds; runs use seeds seed-base .. seed-base + seeds.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed_base: u64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[command(flatten)]
    pub strategy_args: StrategyArgs,
    #[arg(short, long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub run_dir: PathBuf,
    /// Long-format CSV destination; defaults to <run_dir>/report.csv.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Check that the runs were produced from this dataset file.
    #[arg(long)]
    pub verify_dataset: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Query(a) => commands::query(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
