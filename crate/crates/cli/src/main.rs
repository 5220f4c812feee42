//! `dscl`: train, run and score the spatial-context saliency model.

mod commands;
mod eval;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use saliency_core::Error;

/// Exit statuses.
const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

/// Environment variable capping the worker thread count.
const THREADS_VAR: &str = "DSCL_THREADS";

#[derive(Parser, Debug)]
#[command(name = "dscl", version, about = "Saliency prediction with deep spatial contextual LSTMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write the best checkpoint and the history CSV.
    Train(TrainArgs),
    /// Predict a saliency map for one image.
    Predict(PredictArgs),
    /// Score prediction maps against fixation files.
    Eval(EvalArgs),
    /// Compare every backward pass against finite differences.
    Gradcheck(GradcheckArgs),
    /// Write synthetic pop-out images and fixations.
    Synth(SynthArgs),
    /// Train and compare model variants along one axis.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Flat `key = value` file; keys it omits keep the preset's values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training protocol to start from: salicon or mit-finetune.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    ckpt: PathBuf,
    /// Input PPM (or PGM) image.
    #[arg(long)]
    image: PathBuf,
    /// Output 16-bit PGM.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory of `<stem>.pgm` prediction maps.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of `<stem>.csv` fixation files.
    #[arg(long)]
    fix: PathBuf,
    /// Comma-separated subset of nss, cc, auc, sauc.
    #[arg(long, default_value = "nss,cc,auc,sauc")]
    metrics: String,
    /// JSON-lines output file.
    #[arg(long)]
    out: PathBuf,
    /// Seed of the shuffled-AUC negative draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shuffled-AUC rounds per image.
    #[arg(long, default_value_t = saliency_core::metrics::DEFAULT_SAUC_SPLITS)]
    sauc_splits: usize,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Run one group only: layers, lstm, encoders or pipeline.
    #[arg(long)]
    module: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Number of samples.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    /// Seed of the first sample; sample `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Target contrast: color, orientation, lone or none.
    #[arg(long, default_value = "color")]
    mode: String,
    /// Image height and width in pixels.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Distractor count; defaults to the generator's own setting.
    #[arg(long)]
    distractors: Option<usize>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// rf, depth or scene.
    #[arg(long)]
    axis: String,
    /// Training steps per run; the schedule is scaled to fit.
    #[arg(long)]
    steps: Option<usize>,
    /// Comma-separated seeds; results are averaged over them.
    #[arg(long)]
    seeds: Option<String>,
    /// CSV output file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure of a command, carrying its exit status.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_NUMERICAL,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => EXIT_USAGE,
            Error::Degenerate(_) | Error::NonFinite(_) | Error::Diverged(_) => EXIT_NUMERICAL,
            Error::Dimension(_) | Error::Format(_) | Error::Data(_) | Error::Io(_) => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn configure_threads() -> CmdResult {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::usage(format!("{THREADS_VAR} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage(format!("cannot configure {n} threads: {e}")))
}

fn run(cli: Cli) -> CmdResult {
    configure_threads()?;
    match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Eval(a) => eval::run(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Synth(a) => commands::synth(a),
        Command::Ablate(a) => commands::ablate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
