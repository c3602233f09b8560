//! `misreport`: simulate switch misreporting, train and evaluate the hybrid
//! detector, run experiment grids, and measure trajectory QoE.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use misreport_core::classifiers::{ClassifierError, HeadKind};
use misreport_core::detectors::DetectorError;
use misreport_core::eval::EvalError;
use misreport_core::features::FeatureError;
use misreport_core::metrics::MetricsError;
use misreport_core::qoe::QoeError;
use misreport_core::simcore::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Qoe(#[from] QoeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Sim(_) => "simulation",
            CliError::Feature(_) => "features",
            CliError::Detector(_) => "detector",
            CliError::Classifier(_) => "classifier",
            CliError::Metrics(_) => "metrics",
            CliError::Eval(_) => "evaluation",
            CliError::Qoe(_) => "qoe",
            CliError::Io(_) => "io",
            CliError::Json(_) => "json",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "misreport", version, about = "Stealthy switch-misreporting simulation and detection")]
pub struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, or output file for commands that write one file.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// `key = value` file of flag settings; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulated session and write telemetry plus metadata.
    Simulate(SimulateArgs),
    /// Turn telemetry directories into the sliding-window feature matrix.
    Extract(ExtractArgs),
    /// Train the transformer AE, statistical AE and Mahalanobis scorer.
    TrainUnsup(TrainUnsupArgs),
    /// Score windows with an unsupervised model, or score rows with a head.
    Score(ScoreArgs),
    /// Train a supervised head on a scores file.
    #[command(alias = "train")]
    TrainHead(TrainHeadArgs),
    /// Run the full pipeline and write thresholds, heads and ablation.
    Evaluate(PipelineArgs),
    /// Run experiment grids.
    Grid(GridArgs),
    /// Trajectory error between two TUM files, or the spoofing study.
    Qoe(QoeArgs),
    /// Per-sample latency of each scoring stage.
    BenchLatency(BenchArgs),
    /// Shapley attributions of the head and a 2-D latent projection.
    Explain(ExplainArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 4)]
    pub switches: usize,
    #[arg(long, default_value_t = 0.48)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.01)]
    pub rho: f64,
    /// Attack window in epochs; defaults to the whole run.
    #[arg(long)]
    pub epsilon: Option<u64>,
    #[arg(long, default_value_t = 5000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub attack_start: u64,
    #[arg(long, default_value_t = 0)]
    pub compromised: usize,
    /// Overrides the derived misreport frequency.
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub session_interval: Option<f64>,
    #[arg(long)]
    pub background_rate: Option<f64>,
    #[arg(long)]
    pub packet_bytes: Option<f64>,
    #[arg(long)]
    pub workflow_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Telemetry directory; repeat for several sessions.
    #[arg(long = "in", required = true, action = clap::ArgAction::Append)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub stride: usize,
}

#[derive(Debug, Args)]
pub struct TrainUnsupArgs {
    #[arg(long = "in", required = true, action = clap::ArgAction::Append)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub stride: usize,
    /// Transformer AE training epochs.
    #[arg(long)]
    pub tae_epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Unsupervised model or head artifact.
    #[arg(long)]
    pub model: PathBuf,
    /// Telemetry directories, for an unsupervised model.
    #[arg(long = "in", action = clap::ArgAction::Append)]
    pub inputs: Vec<PathBuf>,
    /// Scores CSV, for a head.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

fn parse_head(s: &str) -> Result<HeadKind, String> {
    s.parse::<HeadKind>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct TrainHeadArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, value_parser = parse_head, default_value = "gbt")]
    pub head: HeadKind,
    /// Fit a Platt map on the validation part.
    #[arg(long)]
    pub calibrate: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Telemetry directories to use instead of simulating the base sessions.
    #[arg(long = "in", action = clap::ArgAction::Append)]
    pub inputs: Vec<PathBuf>,
    /// Epochs per simulated session.
    #[arg(long)]
    pub sim_epochs: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub stride: usize,
    #[arg(long)]
    pub tae_epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// attack, window, cross, baselines or all.
    #[arg(long, default_value = "all")]
    pub kind: String,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct QoeArgs {
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub est: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub delta: usize,
    #[arg(long, default_value_t = 100)]
    pub smooth: usize,
    /// Association tolerance in seconds.
    #[arg(long, default_value_t = 0.02)]
    pub max_dt: f64,
    /// Poses per synthetic trajectory in the spoofing study.
    #[arg(long, default_value_t = 2000)]
    pub poses: usize,
    /// Seeds per level in the spoofing study.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0.05)]
    pub sigma_t: f64,
    #[arg(long, default_value_t = 2.0)]
    pub sigma_r: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long, value_parser = parse_head, default_value = "gbt")]
    pub head: HeadKind,
    #[arg(long, default_value_t = 200)]
    pub queries: usize,
    #[arg(long, default_value_t = 50)]
    pub background: usize,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

fn report(err: &CliError) -> ExitCode {
    let doc = serde_json::json!({ "error": err.kind(), "message": err.to_string() });
    eprintln!("{doc}");
    ExitCode::from(err.exit_code())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let args = match config::merge_config(&Cli::command(), args) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(&CliError::Usage(e.render().to_string().trim().to_string())),
    };
    match commands::run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => report(&e),
    }
}
