//! `dmtl`: train, evaluate and inspect multi-task attribute models.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dmtl_core::ErrorClass;

#[derive(Debug, Parser)]
#[command(name = "dmtl", version, about = "Deep multi-task attribute estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Table,
    Csv,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Attribute catalog file or `preset:<name>`.
    #[arg(long)]
    pub catalog: String,
    /// Training config (`key=value` lines).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for `model.ckpt` and `loss.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Catalog file or `preset:<name>`; defaults to the manifest's.
    #[arg(long)]
    pub catalog: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: OutputFormat,
    /// Comma-separated nominal attributes averaged into the aggregate.
    #[arg(long)]
    pub subset: Option<String>,
    /// Spread for ε-error on samples without `<attr>.sigma`.
    #[arg(long)]
    pub global_sigma: Option<f64>,
    /// Round ordinal predictions before scoring.
    #[arg(long)]
    pub round: bool,
    /// Worker threads for forward passes.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub catalog: Option<String>,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct CooccurArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub catalog: Option<String>,
    /// Comma-separated binary attributes; all of them when absent.
    #[arg(long)]
    pub attributes: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator config (`key=value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub catalog: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV `sample_id,subject_id,fold`; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Seeded cases per registered op.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = dmtl_core::gradcheck::STEP)]
    pub step: f64,
    #[arg(long, default_value_t = dmtl_core::gradcheck::TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, value_enum, default_value = "table")]
    pub format: OutputFormat,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write a checkpoint and the loss history.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Write per-sample decoded predictions.
    Predict(PredictArgs),
    /// Phi co-occurrence matrix of binary attributes.
    Cooccur(CooccurArgs),
    /// Generate a synthetic dataset directory.
    Synth(SynthArgs),
    /// Assign subject-exclusive folds.
    Split(SplitArgs),
    /// Finite-difference check of every differentiable op.
    Gradcheck(GradcheckArgs),
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Format => 3,
        ErrorClass::Numerical => 4,
        ErrorClass::Other => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Cooccur(a) => commands::cooccur(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Split(a) => commands::split(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("dmtl: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
