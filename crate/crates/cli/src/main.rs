#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sparse_stgcn::skeleton::Modality;
use sparse_stgcn::trainer::TrainMode;
use sparse_stgcn::Error;

/// Sparse ST-GCN experiments on skeleton sequences.
#[derive(Debug, Parser)]
#[command(name = "sparse-stgcn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset (train.skel, test.skel, manifest.toml).
    Synth(SynthArgs),
    /// Train a network and write its log and checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint and write a confidence CSV.
    Eval(EvalArgs),
    /// Evaluate an ensemble described by a specification file.
    Assemble(AssembleArgs),
    /// Print per-group kept counts of a checkpoint's mask.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with `SynthConfig` keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    #[arg(long)]
    pub test_per_class: Option<usize>,
    #[arg(long)]
    pub joints: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub modality: Option<Modality>,
    #[arg(long)]
    pub mode: Option<TrainMode>,
    #[arg(long)]
    pub sparsity: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated block widths.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    #[arg(long)]
    pub temporal_half_window: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Print one line per epoch to stderr.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset in the raw joint modality.
    #[arg(long)]
    pub data: PathBuf,
    /// Run configuration whose `[net]` section the checkpoint must match.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Confidence CSV path (default: `<checkpoint>.confidence.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = sparse_stgcn::ensemble::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Evaluate the stored weights without applying the mask.
    #[arg(long)]
    pub ignore_mask: bool,
}

#[derive(Debug, Args)]
pub struct AssembleArgs {
    /// Ensemble specification (TOML).
    #[arg(long)]
    pub spec: PathBuf,
    /// Dataset in the raw joint modality.
    #[arg(long)]
    pub data: PathBuf,
    /// Confidence CSV path (default: `<spec>.confidence.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = sparse_stgcn::ensemble::DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
}

/// 1: usage, configuration or contract errors; 2: data, I/O and format
/// errors; 3: invariant violations during training.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Usage(_) | Error::Parameter(_) | Error::Spec(_) | Error::Graph(_) => 1,
        Error::Invariant(_) => 3,
        Error::Dimension { .. }
        | Error::Index(_)
        | Error::Input(_)
        | Error::Batching(_)
        | Error::Mask(_)
        | Error::Checkpoint(_)
        | Error::Parse { .. }
        | Error::Io(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Assemble(a) => commands::assemble(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
