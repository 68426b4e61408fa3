//! `hap`: dataset generation, training, evaluation, embedding export, exact
//! GED queries and coarsening benchmarks.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric
//! failure during training.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hap::train::TrainError;

/// Bad flags or flag combinations; maps to exit code 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Parser, Debug)]
#[command(name = "hap", version, about = "Hierarchical graph pooling: data, training and analysis")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset in the TU text format.
    Generate {
        #[command(subcommand)]
        kind: GenerateKind,
    },
    /// Train a model and write a checkpoint, metric log and manifest.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Export final-level graph embeddings as CSV.
    Embed(EmbedArgs),
    /// Exact graph edit distance between two small edge-list files.
    Ged(GedArgs),
    /// Time one coarsening pass across graph sizes.
    Bench(BenchArgs),
}

#[derive(Subcommand, Debug)]
pub enum GenerateKind {
    /// Base graphs with one similar and one dissimilar partner each.
    Match(MatchGen),
    /// Small random graphs with exact-GED triplets.
    Triplet(TripletGen),
    /// Two-class random graphs differing in edge density.
    ToyClassify(ToyGen),
}

#[derive(Args, Debug)]
pub struct MatchGen {
    /// Nodes per base graph.
    #[arg(long, default_value_t = 20)]
    pub size: usize,
    /// Labeled pairs to emit (even: one positive and one negative per base).
    #[arg(long, default_value_t = 2500)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0.2)]
    pub p_min: f64,
    #[arg(long, default_value_t = 0.5)]
    pub p_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "match")]
    pub name: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TripletGen {
    #[arg(long, default_value_t = 60)]
    pub graphs: usize,
    #[arg(long, default_value_t = 3)]
    pub min_nodes: usize,
    #[arg(long, default_value_t = 8)]
    pub max_nodes: usize,
    #[arg(long, default_value_t = 5000)]
    pub triplets: usize,
    #[arg(long, default_value_t = 0.2)]
    pub p_min: f64,
    #[arg(long, default_value_t = 0.5)]
    pub p_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "triplet")]
    pub name: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ToyGen {
    #[arg(long, default_value_t = 500)]
    pub graphs: usize,
    #[arg(long, default_value_t = 40)]
    pub nodes: usize,
    /// Edge probability of class 0.
    #[arg(long, default_value_t = 0.2)]
    pub p0: f64,
    /// Edge probability of class 1.
    #[arg(long, default_value_t = 0.5)]
    pub p1: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "toy")]
    pub name: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// classify, match or similarity.
    #[arg(long)]
    pub task: Option<String>,
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory for manifest.json, best.ckpt and metrics.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// `key = value` config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// gcn or gat.
    #[arg(long)]
    pub layer: Option<String>,
    #[arg(long)]
    pub layers_per_block: Option<usize>,
    /// Number of coarsening modules.
    #[arg(long)]
    pub coarsen: Option<usize>,
    /// Comma-separated cluster count per module, e.g. 16,1.
    #[arg(long)]
    pub clusters: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Scale of the similarity score.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Train,val,test ratios, e.g. 0.8,0.1,0.1.
    #[arg(long)]
    pub split: Option<String>,
    /// affinity-summary or pad-truncate.
    #[arg(long)]
    pub column_mode: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub head_hidden: Option<usize>,
    /// hap, sum, mean or mean-att.
    #[arg(long)]
    pub pool: Option<String>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Pair loss without the negative-pair term, triplet loss without the square.
    #[arg(long)]
    pub literal_losses: bool,
    /// auto, degree or constant.
    #[arg(long)]
    pub features: Option<String>,
    /// Independent initialisations; best validation accuracy wins.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Disable Gumbel noise in soft sampling during training.
    #[arg(long)]
    pub no_noise: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// train, val, test or all.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Metric CSV to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GedArgs {
    pub first: PathBuf,
    pub second: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated node counts.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 16)]
    pub clusters: usize,
    #[arg(long, default_value_t = 16)]
    pub features: usize,
    #[arg(long, default_value_t = 0.1)]
    pub edge_prob: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV of `n,median_seconds`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Generate { kind } => commands::generate(kind),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Embed(a) => commands::embed(a),
        Command::Ged(a) => commands::ged(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(TrainError::NumericFailure { .. }) = cause.downcast_ref::<TrainError>() {
            return 3;
        }
    }
    2
}
