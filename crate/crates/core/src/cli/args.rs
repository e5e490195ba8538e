use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::optimize::DEFAULT_PILOT_SIZE;

#[derive(Debug, Parser)]
#[command(name = "condmc", version, about = "Conditional Monte Carlo pmf estimation for reaction networks")]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "CONDMC_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classical Monte Carlo: pmf of independent end states.
    Simulate(SimulateArgs),
    /// Pilot run and (m, h) tuning.
    Tune(TuneArgs),
    /// Conditional Monte Carlo pmf estimate with an ISE confidence bound.
    Estimate(EstimateArgs),
    /// Empirical MISE ratios and predicted ratios over an (m, h) grid.
    Heatmap(HeatmapArgs),
    /// Confidence bound from stored family counts.
    Ci(CiArgs),
    /// Runs acceptance checks and reports pass/fail per check.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// `builtin:NAME` or a path to a model file.
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Estimate the marginal over these species (comma-separated names).
    #[arg(long, value_delimiter = ',')]
    pub marginal: Option<Vec<String>>,
    /// Jump cap per simulated path segment.
    #[arg(long, default_value_t = crate::simulate::DEFAULT_MAX_JUMPS)]
    pub max_jumps: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[group(required = true, multiple = false)]
pub struct SizeArgs {
    /// Number of paths (or families).
    #[arg(long)]
    pub n: Option<u64>,
    /// Budget in simulated events; sampling stops at the first path or
    /// family that reaches it.
    #[arg(long)]
    pub budget: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TuneKnobs {
    /// Pilot ensemble size.
    #[arg(long, default_value_t = DEFAULT_PILOT_SIZE)]
    pub pilot: usize,
    /// Coefficient bound of the nullspace lattice.
    #[arg(long, default_value_t = 4)]
    pub coeff_bound: u32,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub size: SizeArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Also write the first K full paths as CSV (debugging aid).
    #[arg(long, value_name = "K")]
    pub dump_paths: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TuneArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub knobs: TuneKnobs,
    /// Also write tune.json into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub size: SizeArgs,
    /// Branch count; tuned when omitted together with --h.
    #[arg(long, requires = "h")]
    pub m: Option<u32>,
    /// Branch window; tuned when omitted together with --m.
    #[arg(long, requires = "m")]
    pub h: Option<f64>,
    #[command(flatten)]
    pub knobs: TuneKnobs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HeatmapArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Event budget per run.
    #[arg(long, conflicts_with = "n_classical")]
    pub budget: Option<f64>,
    /// Budget as a classical sample size, times the pilot mean event count.
    #[arg(long, default_value_t = 1000.0)]
    pub n_classical: f64,
    /// Branch counts (comma-separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub m_grid: Vec<u32>,
    /// Branch windows (comma-separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub h_grid: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    pub replicates: u32,
    /// Reference budget as a multiple of the run budget; models with a
    /// closed-form pmf use it instead.
    #[arg(long, default_value_t = 20.0)]
    pub reference_factor: f64,
    #[command(flatten)]
    pub knobs: TuneKnobs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CiArgs {
    /// Family counts CSV as written by `estimate`.
    #[arg(long)]
    pub counts: PathBuf,
    /// Branch window the counts were produced with.
    #[arg(long)]
    pub h: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Write ci.json here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    /// Oracle cross-checks, trace formulas and event counts (seconds).
    Quick,
    Oracle,
    Mise,
    Skellam,
    Traces,
    Clt,
    Efficiency,
    Tuner,
    Events,
    Determinism,
    /// Every acceptance criterion (minutes).
    All,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long, value_enum, default_value_t = Suite::Quick)]
    pub suite: Suite,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Model for the clt suite; needs a closed-form pmf.
    #[arg(long, default_value = "builtin:birth-death")]
    pub model: String,
}
