//! `comono-rdd`: simulate designs, estimate transfer curves, CATEs and
//! policy effects, and replay runs from their manifests.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use args::{BootArgs, DataArgs, ModelArgs, Range};

#[derive(Debug, Parser)]
#[command(
    name = "comono-rdd",
    version,
    about = "Extrapolate treatment effects away from the frontier of a sharp multivariate RDD"
)]
struct Cli {
    /// Worker threads (default: all cores); results do not depend on it
    #[arg(long, global = true, env = "COMONO_RDD_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic design with known truth
    Simulate(SimulateArgs),
    /// Estimate a transfer curve q on a grid over its domain
    EstimateQ(EstimateArgs),
    /// Estimate a transfer curve with multiplier-bootstrap bands
    Bootstrap(BootstrapArgs),
    /// Impute conditional average treatment effects
    Cate(CateArgs),
    /// Effect of one counterfactual treatment rule
    Policy(PolicyArgs),
    /// Effects of single-covariate cutoff rules over a range of cutoffs
    PolicySweep(SweepArgs),
    /// Pairwise comonotonicity diagnostic on near-frontier fits
    Diagnose(DiagnoseArgs),
    /// Rerun a recorded command and check its artifacts byte for byte
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DgpArg {
    Expository,
    Skill,
    Linear,
    Anti,
    Stratified,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub dgp: DgpArg,
    #[arg(long, default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Untreated-to-treated slope ratio (linear design)
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub slope_ratio: f64,
    /// Untreated intercept shift (linear design)
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub intercept0: f64,
    /// Per-stratum slope ratios (stratified design)
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.8])]
    pub slopes: Vec<f64>,
    /// Outcome noise SD (linear, anti and stratified designs)
    #[arg(long, default_value_t = 0.1)]
    pub noise_sd: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON description of the true conditional means
    #[arg(long)]
    pub truth_out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub boot: BootArgs,
    /// Group whose fits are extrapolated: 1 estimates q0, 0 estimates q1
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub direction: u8,
    /// Comma-separated stratum columns for the conditional estimator
    #[arg(long, value_delimiter = ',')]
    pub strata_cols: Option<Vec<String>>,
    /// Stratum points as `a,b;c,d` (default: every distinct value combination)
    #[arg(long)]
    pub strata_points: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 100)]
    pub bootstrap_draws: usize,
    #[arg(long, default_value_t = 0.90)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub direction: u8,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// CSV of evaluation points with the covariate columns and optionally
    /// the treatment column (default: every sample unit)
    #[arg(long)]
    pub points: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PolicyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub boot: BootArgs,
    /// `factual`, `all`, `none`, `p=0.3`, or a linear rule such as `x1<=0.5`
    #[arg(long, allow_hyphen_values = true)]
    pub rule: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideArg {
    Below,
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    /// Treat the factually treated plus the swept side
    Extend,
    /// Treat exactly the swept side
    Replace,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub boot: BootArgs,
    /// Covariate the cutoff applies to
    #[arg(long)]
    pub axis: String,
    #[arg(long, value_name = "LO:HI:N", allow_hyphen_values = true)]
    pub cutoffs: Range,
    #[arg(long, value_enum, default_value = "below")]
    pub side: SideArg,
    #[arg(long, value_enum, default_value = "extend")]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Minimum spacing of evaluation units, in multiples of h
    #[arg(long, default_value_t = 4.0)]
    pub diag_spacing: f64,
    /// Drop units supported by less than this share of the median
    #[arg(long, default_value_t = 0.5)]
    pub diag_support_share: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write artifacts here (same file names) instead of over the originals
    #[arg(long)]
    pub redirect_dir: Option<PathBuf>,
}

/// Failures detected by the front end rather than the library.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("replay mismatch: {0}")]
    Mismatch(String),
}

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_ESTIMATION: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<comono_rdd::Error>() {
            return match e {
                e if e.is_data_error() => EXIT_DATA,
                comono_rdd::Error::InvalidArgument(_) => EXIT_USAGE,
                _ => EXIT_ESTIMATION,
            };
        }
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Usage(_) => EXIT_USAGE,
                CliError::Data(_) => EXIT_DATA,
                CliError::Mismatch(_) => 1,
            };
        }
    }
    1
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|c| c.downcast_ref::<comono_rdd::Error>().map(|e| e.kind()))
        .unwrap_or("Error")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match commands::execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error[{}]: {err:#}", error_kind(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
