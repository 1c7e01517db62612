//! `neurohand`: synthesize datasets, train decoders, run the real-time
//! pipeline, benchmark it and score prediction logs.

mod commands;
mod error;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;
use settings::Settings;

#[derive(Parser, Debug)]
#[command(name = "neurohand", version, about = "Nerve-signal finger decoding: synthesis, training, real-time runs")]
struct Cli {
    /// TOML config with [synth], [train], [run] and [bench] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config value, e.g. `--set train.epochs=4`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset directory.
    Synth(SynthArgs),
    /// Train one decoder model on a dataset directory.
    Train(TrainArgs),
    /// Stream a source through the three-stage pipeline.
    Run(RunArgs),
    /// Latency and frame-rate matrix over power modes and model counts.
    Bench(BenchArgs),
    /// Score a prediction log against glove labels.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated gesture names (thumb, index, middle, ring, pinky, fist,
    /// index_pinch, pointing, hook_em) or name=bits entries.
    #[arg(long)]
    pub gestures: Option<String>,
    #[arg(long)]
    pub sessions: Option<u64>,
    /// able or amputee.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub snr_db: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// tiny or full.
    #[arg(long)]
    pub model: Option<String>,
    /// Owned fingers as five bits, thumb first.
    #[arg(long)]
    pub fingers: Option<String>,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<u64>,
    #[arg(long)]
    pub window_stride: Option<u64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from this checkpoint's weights and preprocessing.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Ensemble checkpoints; fingers must be owned exactly once.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Recorded wire stream to replay; emulated devices otherwise.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Labels for the replayed stream, enabling a score at the end.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Gesture the emulated devices perform.
    #[arg(long)]
    pub gesture: Option<String>,
    /// able or amputee, for emulated devices.
    #[arg(long)]
    pub mode: Option<String>,
    /// Clock offsets of the two emulated devices, e.g. `500,-500`.
    #[arg(long)]
    pub ppm: Option<String>,
    /// 5W or 10W.
    #[arg(long)]
    pub power: Option<String>,
    /// Seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// none, file:PATH or tcp:HOST:PORT.
    #[arg(long)]
    pub debug_sink: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Deterministic single-threaded run on a virtual clock.
    #[arg(long = "virtual")]
    pub virtual_clock: bool,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Benchmark CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated power modes.
    #[arg(long)]
    pub modes: Option<String>,
    #[arg(long)]
    pub max_models: Option<u64>,
    /// Seconds per run.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "virtual")]
    pub virtual_clock: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Report CSV to write; printed only otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let settings = Settings::load(cli.config.as_deref(), &cli.overrides)?;
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::Synth(a) => commands::synth(&a, &settings, cfg),
        Command::Train(a) => commands::train(&a, &settings, cfg),
        Command::Run(a) => commands::run(&a, &settings, cfg),
        Command::Bench(a) => commands::bench(&a, &settings, cfg),
        Command::Eval(a) => commands::eval(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("neurohand: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
