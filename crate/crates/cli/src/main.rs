//! `gaussrep` command-line tool.
//!
//! Exit codes: 0 success, 1 a check ran and failed, 2 usage or parse error,
//! 3 degenerate or empty input, 4 numerical divergence.

mod commands;
mod payload;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gaussrep::{LossKind, MetricKind};

use payload::Representation;

#[derive(Debug, Parser)]
#[command(name = "gaussrep", version, about = "Gaussian representations of oriented boxes and point sets")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file; a directory for `assign` and `optimize`.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true, value_parser = parse_metric)]
    pub metric: Option<MetricKind>,
    #[arg(long, global = true, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Svg,
}

fn parse_metric(s: &str) -> Result<MetricKind, String> {
    s.parse().map_err(|e: gaussrep::Error| e.to_string())
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|e: gaussrep::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert between box, point-set and Gaussian encodings.
    Convert {
        #[arg(long, value_enum)]
        from: Representation,
        #[arg(long, value_enum)]
        to: Target,
        /// Inline JSON or a file path; stdin when absent.
        #[arg(long = "in")]
        input: Option<String>,
    },
    /// Raw distance between two payloads.
    Distance(PairArgs),
    /// Normalized loss between two payloads.
    Loss(PairArgs),
    /// Assignment score between two payloads.
    Score(PairArgs),
    /// Compare analytic and finite-difference gradients.
    GradCheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Label proposals of a scene against its ground truths.
    Assign(AssignArgs),
    /// Gradient descent on a point set toward a ground-truth box.
    Optimize(OptimizeArgs),
    /// Summarize a directory of DOTA annotation files.
    Ingest {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Gaussian,
    Obb,
}

/// Payloads are inline JSON or paths to JSON files.
#[derive(Debug, Args)]
pub struct PairArgs {
    #[arg(long)]
    pub gt: String,
    #[arg(long)]
    pub pred: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyName {
    Fixed,
    Atss,
    Patss,
    IouFixed,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    /// Scene JSON file as written by `--gen`.
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    pub scene: Option<PathBuf>,
    /// Generate a scene from `--seed`.
    #[arg(long)]
    pub gen: bool,
    /// Scene generation config JSON; defaults apply to missing fields.
    #[arg(long, requires = "gen")]
    pub config: Option<PathBuf>,
    /// Overrides the config's jitter.
    #[arg(long, requires = "gen")]
    pub jitter: Option<f64>,
    #[arg(long, value_enum)]
    pub strategy: StrategyName,
    #[arg(long, default_value_t = gaussrep::assignment::DEFAULT_POS_THRESHOLD)]
    pub pos_thr: f64,
    #[arg(long, default_value_t = gaussrep::assignment::DEFAULT_NEG_THRESHOLD)]
    pub neg_thr: f64,
    #[arg(long)]
    pub force_match: bool,
    #[arg(long, default_value_t = gaussrep::assignment::DEFAULT_CANDIDATES)]
    pub candidates: usize,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Ground-truth box JSON; a seeded random box when absent.
    #[arg(long)]
    pub gt: Option<String>,
    /// Initial points are the gt corners translated by this fraction of the
    /// gt width, in a seeded random direction.
    #[arg(long, default_value_t = 0.2)]
    pub jitter: f64,
    #[arg(long, default_value_t = gaussrep::simulator::DEFAULT_OPTIMIZE_STEPS)]
    pub steps: usize,
    /// Defaults to the tuned step for the chosen loss.
    #[arg(long)]
    pub step_size: Option<f64>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn empty(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl From<gaussrep::Error> for CliError {
    fn from(e: gaussrep::Error) -> Self {
        let code = match e {
            gaussrep::Error::DegenerateCovariance(_) => 3,
            gaussrep::Error::InvalidInput(_) | gaussrep::Error::Io { .. } => 2,
        };
        Self { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
