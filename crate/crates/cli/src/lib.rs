//! The `hasopt` experiment pipeline: workload generation, optimal paths,
//! corpus extraction, training, single sessions and batch evaluation.
//!
//! Exit codes: 0 success, 1 I/O or data error, 2 invalid flags or inputs,
//! 3 infeasible instance, 4 evaluation finished with failed pairs.

pub mod commands;
pub mod evaluate;
pub mod manifest;
pub mod provenance;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use hasopt_core::SessionConfig;

pub use manifest::{RunManifest, StartSpec};

/// A flag or input value that cannot be used.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Evaluation outputs were written but some pairs failed.
#[derive(Debug)]
pub struct PartialFailure {
    pub failed: usize,
    pub total: usize,
}

impl fmt::Display for PartialFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} of {} (video, start) pairs failed", self.failed, self.total)
    }
}

impl std::error::Error for PartialFailure {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    use hasopt_core::Error as E;
    for cause in err.chain() {
        if cause.is::<PartialFailure>() {
            return 4;
        }
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e.root() {
                E::Infeasible { .. } => 3,
                E::Invalid(_)
                | E::IndexOutOfRange { .. }
                | E::TooLarge { .. }
                | E::RepresentationMismatch { .. }
                | E::Dimension { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

#[derive(Debug, Parser)]
#[command(name = "hasopt", version, about = "Optimal HTTP adaptive streaming paths and imitation-learned adaptation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic goodput trace (CSV).
    GenTrace(GenTraceArgs),
    /// Generate a synthetic video manifest (JSON).
    GenVideo(GenVideoArgs),
    /// Compute the optimal adaptation path for one session.
    Solve(SolveArgs),
    /// Build a training corpus from optimal paths.
    Extract(ExtractArgs),
    /// Train the adaptation network on a corpus.
    Train(TrainArgs),
    /// Simulate one playback session.
    Simulate(SimulateArgs),
    /// Evaluate algorithms against optimal paths over a manifest of runs.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct GenTraceArgs {
    #[arg(long, default_value_t = 0.67)]
    pub mean_mbps: f64,
    #[arg(long, default_value_t = 0.38)]
    pub cv: f64,
    #[arg(long, default_value_t = 0.80)]
    pub ac1: f64,
    /// Seconds; one sample per second.
    #[arg(long, default_value_t = 720)]
    pub duration: u32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenVideoArgs {
    #[arg(long)]
    pub segments: usize,
    /// Comma-separated average level rates, lowest first.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.23,0.36,0.68,1.33")]
    pub rates_mbps: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub segment_duration: f64,
    #[arg(long, default_value_t = 0.5)]
    pub burstiness: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

/// Session parameters shared by several commands.
#[derive(Debug, Clone, Args)]
pub struct SessionArgs {
    /// Offset into the trace, in whole seconds.
    #[arg(long, default_value_t = 0)]
    pub start: u32,
    /// Allowed mean-quality gap when minimizing switches.
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    /// Start-up delay T0 in seconds.
    #[arg(long, default_value_t = 5.0)]
    pub t0: f64,
    /// Buffered seconds needed to resume after a stall.
    #[arg(long, default_value_t = 10.0)]
    pub rebuffer_target: f64,
}

impl SessionArgs {
    pub fn config(&self) -> SessionConfig {
        SessionConfig {
            startup_delay_s: self.t0,
            rebuffer_target_s: self.rebuffer_target,
            trace_start_s: self.start,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub video: PathBuf,
    #[arg(long)]
    pub trace: PathBuf,
    #[command(flatten)]
    pub session: SessionArgs,
    /// Enumerate every path instead (small instances only).
    #[arg(long)]
    pub brute_force: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Directory of video JSON files, used in file-name order.
    #[arg(long)]
    pub videos: PathBuf,
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value = "0:700:7")]
    pub starts: StartSpec,
    #[command(flatten)]
    pub session: SessionArgs,
    /// Where to write the scaling context; defaults to `<output>.scaling.json`
    /// with the `.csv` extension replaced.
    #[arg(long)]
    pub scaling: Option<PathBuf>,
    #[arg(long, env = "HASOPT_WORKERS")]
    pub workers: Option<usize>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Scaling context written by `extract`; defaults to the corpus sidecar.
    #[arg(long)]
    pub scaling: Option<PathBuf>,
    #[arg(long, default_value_t = 110)]
    pub hidden: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0 / 9.0)]
    pub validation_fraction: f64,
    /// Where to write the training report; defaults to `<output>.report.json`
    /// with the `.json` extension replaced.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

/// Adaptation logic selector: `rate`, `aggressive`, `model:PATH` or
/// `script:PATH`.
#[derive(Debug, Clone, PartialEq)]
pub enum AlgoSpec {
    Rate,
    Aggressive,
    Model(PathBuf),
    Script(PathBuf),
}

impl FromStr for AlgoSpec {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, UsageError> {
        match s.split_once(':') {
            None if s == "rate" => Ok(AlgoSpec::Rate),
            None if s == "aggressive" => Ok(AlgoSpec::Aggressive),
            Some(("model", p)) if !p.is_empty() => Ok(AlgoSpec::Model(p.into())),
            Some(("script", p)) if !p.is_empty() => Ok(AlgoSpec::Script(p.into())),
            _ => Err(UsageError(format!(
                "unknown algorithm {s:?}; expected rate, aggressive, model:PATH or script:PATH"
            ))),
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub algo: AlgoSpec,
    #[arg(long)]
    pub video: PathBuf,
    #[arg(long)]
    pub trace: PathBuf,
    #[command(flatten)]
    pub session: SessionArgs,
    #[arg(long)]
    pub safety_factor: Option<f64>,
    #[arg(long)]
    pub smoothing_window: Option<usize>,
    #[arg(long)]
    pub upswitch_buffer: Option<f64>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; overrides the manifest's `output_dir`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Parallel workers; does not affect the outputs.
    #[arg(long, env = "HASOPT_WORKERS")]
    pub workers: Option<usize>,
}

/// Default worker count when neither the flag nor `HASOPT_WORKERS` is set.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenTrace(a) => commands::gen_trace(&a),
        Command::GenVideo(a) => commands::gen_video(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::Extract(a) => commands::extract(&a),
        Command::Train(a) => commands::train(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
    }
}

/// Entry point shared by the binary: runs and maps errors to exit codes.
pub fn main_with(cli: Cli) -> ExitCode {
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
