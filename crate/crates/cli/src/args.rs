use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "surveytmle", version, about = "TMLE on weighted sub-samples of large data sets")]
#[command(arg_required_else_help = true, args_override_self = true)]
pub struct Cli {
    /// `key = value` file; every key is a long flag of the subcommand. Flags on
    /// the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Log filter, e.g. `info` or `debug`.
    #[arg(long, global = true, default_value = "info")]
    pub log: String,
    /// Worker threads; all cores when omitted. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw a sub-sample and write its units, probabilities and weights.
    Sample(SampleArgs),
    /// Run a uniform pilot and write the optimized sampling function.
    Pilot(PilotArgs),
    /// Effect of a binary exposure.
    TmleBinary(TmleArgs),
    /// Effect of a continuous exposure with a reference level 0.
    TmleContinuous(ContinuousArgs),
    /// Monte Carlo study on the built-in simulation scheme.
    Simulate(SimulateArgs),
    /// Run the built-in oracle checks.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExposureArg {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    Rejective,
    Pareto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HModeArg {
    Pilot,
    Uniform,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long, value_name = "CSV")]
    pub data: PathBuf,
    /// Covariate columns, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub w: Vec<String>,
    #[arg(long, default_value = "a")]
    pub a: String,
    #[arg(long, default_value = "y")]
    pub y: String,
    /// Stratum column; a single stratum when omitted.
    #[arg(long)]
    pub v: Option<String>,
    /// Lower end of the outcome range; the data minimum by default.
    #[arg(long, requires = "y_max", allow_negative_numbers = true)]
    pub y_min: Option<f64>,
    #[arg(long, requires = "y_min", allow_negative_numbers = true)]
    pub y_max: Option<f64>,
}

#[derive(Args, Debug)]
pub struct DrawArgs {
    #[arg(long)]
    pub seed: u64,
    /// Sub-sample size; the whole data set is used when omitted.
    #[arg(long)]
    pub n: Option<usize>,
    /// Two-column CSV `stratum,h`; uniform when omitted.
    #[arg(long, value_name = "CSV")]
    pub h_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DesignArg::Rejective)]
    pub design: DesignArg,
    /// Rejective attempts before falling back to Pareto sampling.
    #[arg(long, default_value_t = 1000)]
    pub max_attempts: usize,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = ExposureArg::Binary)]
    pub exposure: ExposureArg,
    #[command(flatten)]
    pub draw: DrawArgs,
    /// Output CSV `unit,p,weight`; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PilotArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub exposure: ExposureArg,
    #[arg(long)]
    pub seed: u64,
    /// Pilot size.
    #[arg(long)]
    pub n0: usize,
    /// Lower bound on the optimized h.
    #[arg(long, default_value_t = surveytmle::pilot::DEFAULT_H_FLOOR)]
    pub floor: f64,
    #[arg(long, default_value_t = surveytmle::glm::DEFAULT_G_MIN)]
    pub g_min: f64,
    #[arg(long, value_enum, default_value_t = DesignArg::Rejective)]
    pub design: DesignArg,
    /// Where to write the h-file; stdout when omitted.
    #[arg(long)]
    pub h_out: Option<PathBuf>,
    /// Full pilot result as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TmleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub draw: DrawArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Truncation level of the exposure mechanism.
    #[arg(long, default_value_t = surveytmle::glm::DEFAULT_G_MIN)]
    pub g_min: f64,
    /// Report as JSON; the table goes to stdout either way.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Per-unit nuisance values of the sampled units as CSV.
    #[arg(long, value_name = "CSV")]
    pub dump_nuisances: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ContinuousArgs {
    #[command(flatten)]
    pub tmle: TmleArgs,
    /// Evaluate the final estimate by simulation rather than on the atoms.
    #[arg(long)]
    pub mc_mode: bool,
    /// Number of simulated draws in Monte Carlo mode.
    #[arg(long = "mc-B", default_value_t = 100_000)]
    pub mc_b: usize,
    #[arg(long, default_value_t = 7)]
    pub max_iter: usize,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub seed: u64,
    /// Population size.
    #[arg(long = "big-n", default_value_t = 200_000)]
    pub big_n: usize,
    /// Replicates per arm.
    #[arg(long = "replicates", short = 'B', default_value_t = 200)]
    pub replicates: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [500, 2000, 5000])]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3])]
    pub dgp: Vec<u8>,
    #[arg(long = "h", value_enum, value_delimiter = ',', default_values_t = [HModeArg::Pilot, HModeArg::Uniform])]
    pub h_modes: Vec<HModeArg>,
    #[arg(long, default_value_t = 1000)]
    pub n0: usize,
    #[arg(long, default_value_t = surveytmle::pilot::DEFAULT_H_FLOOR)]
    pub floor: f64,
    #[arg(long, value_enum, default_value_t = DesignArg::Rejective)]
    pub design: DesignArg,
    /// Permit n/N above the default limit.
    #[arg(long)]
    pub allow_large_fraction: bool,
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// One row per arm.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Score tolerance of the binary fluctuation under test.
    #[arg(long)]
    pub fluctuation_tol: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub rejective_draws: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_draws: usize,
    #[arg(long)]
    pub json: Option<PathBuf>,
}
