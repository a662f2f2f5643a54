use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "drci", version, about = "Distributionally robust conformal calibration, shift audits and simulations")]
pub struct Cli {
    /// Seed for stochastic commands (required by them).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output path; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate g and its inverse.
    Gfun(GfunArgs),
    /// Calibrate a robust threshold from held-out scores.
    Calibrate(CalibrateArgs),
    /// Worst coverage of a threshold along given or sampled directions.
    Audit(AuditArgs),
    /// Monte Carlo coverage study.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("point").required(true).args(["beta", "tau", "grid"])))]
pub struct GfunArgs {
    /// Divergence: chi2 or kl.
    #[arg(long = "f", default_value = "chi2")]
    pub f: String,
    #[arg(long)]
    pub rho: f64,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Evaluate at 0, 0.01, …, 1.
    #[arg(long)]
    pub grid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    /// Worst subsets over sampled directions.
    Sample,
    /// Halfspaces along a least-squares direction.
    Regress,
    /// Halfspaces along a logistic median-split direction.
    Classify,
}

/// Input files shared by calibrate and audit.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Scores file (column `score`).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Features file (columns `x1, …, xd`).
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Joint file with `x1, …, xd` and `score`.
    #[arg(long, conflicts_with_all = ["scores", "features"])]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("radius").required(true).args(["rho", "estimate"])))]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, value_enum)]
    pub estimate: Option<Strategy>,
    /// Divergence: chi2 or kl.
    #[arg(long = "f", alias = "divergence", default_value = "chi2")]
    pub f: String,
    /// Use the finite-sample corrected level.
    #[arg(long)]
    pub corrected: bool,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub level_v: f64,
    #[arg(long, default_value_t = 500)]
    pub k: usize,
    /// Fraction of rows used to fit the direction.
    #[arg(long, default_value_t = 0.5)]
    pub split: f64,
    #[arg(long, default_value = "slab")]
    pub family: String,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("directions_source").required(true).args(["direction", "directions", "sample"])))]
pub struct AuditArgs {
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long)]
    pub q: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, default_value = "slab")]
    pub family: String,
    /// Inline direction (or ball center), comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub direction: Option<String>,
    /// File of directions with columns `x1, …, xd`.
    #[arg(long)]
    pub directions: Option<PathBuf>,
    /// Number of uniformly sampled directions.
    #[arg(long)]
    pub sample: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    /// Misspecified heteroskedastic regression under a mean shift.
    Hetero,
    /// Exponential tilting along the top principal component.
    Tilt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SizeRuleArg {
    Squared,
    Absolute,
    Threshold,
    Candidates,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    /// Comma-separated methods, e.g. `sc,chi2-s,kl-r`.
    #[arg(long, default_value = "sc,chi2-s")]
    pub methods: String,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Validation and test sizes (hetero) or calibration size (tilt, synthetic pool).
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    /// Misspecification t in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    pub t: f64,
    /// Test mean shift: a number s for s·e₁, or a full comma-separated vector.
    #[arg(long, default_value = "2", allow_hyphen_values = true)]
    pub shift: String,
    /// Noise scale h: exp, softplus, relu1 or constant.
    #[arg(long, default_value = "exp")]
    pub h: String,
    /// Residual score: squared or absolute.
    #[arg(long, default_value = "squared")]
    pub score: String,
    /// Tilt strengths, comma separated.
    #[arg(
        long,
        default_value = "-0.64,-0.32,-0.16,-0.08,-0.04,-0.02,0,0.02,0.04,0.08,0.16,0.32,0.64",
        allow_hyphen_values = true
    )]
    pub a_grid: String,
    /// Joint file to tilt instead of a synthetic pool.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Per-row candidate-label scores (`c1, …, cK`) for count set sizes.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub size_rule: Option<SizeRuleArg>,
    #[arg(long, default_value_t = 0.5)]
    pub calibration_fraction: f64,
    /// Tilted test sample size; defaults to the pool size.
    #[arg(long)]
    pub test_size: Option<usize>,
    /// Radius for the `-fixed` methods.
    #[arg(long, default_value_t = 0.01)]
    pub rho: f64,
    #[arg(long, default_value_t = 500)]
    pub k: usize,
    #[arg(long, default_value_t = 0.05)]
    pub level_v: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub delta: f64,
    #[arg(long, default_value = "slab")]
    pub family: String,
    #[arg(long, default_value_t = 0.5)]
    pub split: f64,
    #[arg(long)]
    pub corrected: bool,
}
