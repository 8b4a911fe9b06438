//! `diq`: score, select and simulate difficulty-influence data selection
//! from the command line.
//!
//! Exit codes: 0 on success, 1 on I/O failure, 2 on invalid input.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use diq_core::flops::Formula;
use diq_core::influence::{ModelKind, DEFAULT_VALIDATION_PER_POOL};
use diq_core::Dimension;

use error::CliError;

#[derive(Parser)]
#[command(name = "diq", version, about = "Difficulty-influence quadrant data selection")]
struct Cli {
    /// How failures are reported on stderr.
    #[arg(long, global = true, value_enum, default_value_t = ErrorFormat::Human)]
    error_format: ErrorFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ErrorFormat {
    Human,
    Json,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Output {
    #[default]
    Jsonl,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Regression,
    Classification,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic training pool with difficulty labels.
    Synth(SynthArgs),
    /// Train a reference model by SGD and save per-epoch checkpoints.
    Train(TrainArgs),
    /// Score every training sample's influence on validation loss.
    #[command(alias = "score")]
    Influence(InfluenceArgs),
    /// Quadrant split and priority fill.
    Select(SelectArgs),
    /// Closed-form FLOPs estimate for training, inference or LoRA.
    #[command(alias = "estimate")]
    Flops(FlopsArgs),
    /// Paired DIQ-versus-random comparison on synthetic data.
    Simulate(SimulateArgs),
    /// Check a score file against a dataset without selecting.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Directory for train.jsonl, difficulty.jsonl, validation.jsonl and test.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = TaskArg::Regression)]
    task: TaskArg,
    #[arg(long, default_value_t = 2000)]
    n_train: usize,
    #[arg(long, default_value_t = 200)]
    n_val: usize,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = ModelKind::Linear)]
    model: ModelKind,
    #[arg(long, default_value_t = 3)]
    epochs: usize,
    /// Peak of the cosine learning-rate schedule [default: 0.005 for
    /// logistic, 0.01 otherwise].
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Use a constant rate instead of the cosine decay.
    #[arg(long)]
    constant: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InfluenceArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Validation pool; repeat for several tasks.
    #[arg(long = "val", required = true)]
    val: Vec<PathBuf>,
    #[arg(long)]
    checkpoints: PathBuf,
    #[arg(long, default_value_t = ModelKind::Linear)]
    model: ModelKind,
    /// Validation samples drawn per pool.
    #[arg(long, default_value_t = DEFAULT_VALIDATION_PER_POOL)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    /// Difficulty file to merge into the output rows.
    #[arg(long)]
    difficulty: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Output,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    tau: f64,
    #[arg(long)]
    ratio: f64,
    #[arg(long, default_value_t = Dimension::Overall)]
    dimension: Dimension,
    #[arg(long, value_enum, default_value_t)]
    format: Output,
    /// Manifest file to write.
    #[arg(long)]
    out: PathBuf,
    /// Selected samples, in selection order.
    #[arg(long)]
    subset: Option<PathBuf>,
}

#[derive(Args)]
struct FlopsArgs {
    #[arg(long = "mode", alias = "formula", default_value_t = Formula::Train)]
    formula: Formula,
    #[arg(long)]
    layers: u64,
    #[arg(long)]
    hidden: u64,
    /// Tokens per sample.
    #[arg(long)]
    tokens: u64,
    #[arg(long)]
    samples: u64,
    #[arg(long, default_value_t = 1)]
    epochs: u64,
    #[arg(long)]
    lora_rank: Option<u64>,
    #[arg(long)]
    adapted_matrices: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.1])]
    ratios: Vec<f64>,
    /// Number of paired seeds, numbered from zero.
    #[arg(long, default_value_t = 20)]
    n_seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = TaskArg::Regression)]
    task: TaskArg,
    #[arg(long, default_value_t = ModelKind::Linear)]
    model: ModelKind,
    #[arg(long, default_value_t = 2000)]
    n_train: usize,
    #[arg(long, default_value_t = 3)]
    epochs: usize,
    #[arg(long, default_value_t = 3.0)]
    tau: f64,
    #[arg(long, default_value_t = DEFAULT_VALIDATION_PER_POOL)]
    k: usize,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    scores: PathBuf,
}

fn report(err: &CliError, format: ErrorFormat) {
    match format {
        ErrorFormat::Human => eprintln!("error: {err}"),
        ErrorFormat::Json => match serde_json::to_string(err) {
            Ok(line) => eprintln!("{line}"),
            Err(_) => eprintln!("error: {err}"),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Influence(a) => commands::influence(a),
        Command::Select(a) => commands::select(a),
        Command::Flops(a) => commands::flops(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Validate(a) => commands::validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e, cli.error_format);
            ExitCode::from(e.kind.exit_code())
        }
    }
}
