use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use eigenmat::covgen::Family;
use eigenmat::experiment::Study;
use eigenmat::solver::{Init, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use eigenmat::Shape;

/// Low-rank principal eigenmatrix estimation with SMART-PM.
#[derive(Debug, Parser)]
#[command(name = "eigenmat", version)]
pub struct Cli {
    /// Worker threads for parallel work, 0 for one per core.
    #[arg(long, global = true, env = "EIGENMAT_THREADS")]
    pub threads: Option<usize>,

    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    /// Exit with status 1 when a checked claim does not hold.
    #[arg(long, global = true)]
    pub strict: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a structured covariance matrix.
    Gen(GenArgs),
    /// Run SMART-PM (or the power method) on a matrix file.
    Solve(SolveArgs),
    /// Run one of the replicated studies.
    Experiment(ExperimentArgs),
    /// Evaluate theoretical constants and check the bounds on instances.
    #[command(subcommand)]
    Theory(Probe),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Covariance family.
    #[arg(long, required_unless_present = "spec")]
    pub family: Option<Family>,
    /// JSON spec `{"family", "d", "params", "seed"}`; flags override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Ambient dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// Decay of the circulant or Toeplitz family.
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub p1: Option<usize>,
    #[arg(long)]
    pub p2: Option<usize>,
    /// Spike strength of the spiked family.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Rank of the spiked family's ground truth.
    #[arg(long)]
    pub kbar: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the empirical covariance of this many Gaussian draws instead
    /// of the covariance itself.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Seed of the draws for --samples.
    #[arg(long, default_value_t = 0, requires = "samples")]
    pub sample_seed: u64,
    /// Output file; `.csv` writes CSV, anything else EMX1. A JSON sidecar
    /// is written next to it.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Symmetric matrix file (EMX1 or .csv).
    pub matrix: PathBuf,
    /// Rank bound.
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value = "random")]
    pub init: Init,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Matricization `P1xP2`; required unless the dimension is a square.
    #[arg(long)]
    pub shape: Option<Shape>,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
    pub max_iter: usize,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tol: f64,
    /// Run the vector power method from the random start instead.
    #[arg(long, conflicts_with = "init")]
    pub power: bool,
    /// Reference eigenmatrix file; errors against it are recorded.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Skip recording the Rayleigh quotient per iteration.
    #[arg(long)]
    pub no_trajectory: bool,
    /// Report file (default stdout).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write the final iterate as an EMX1 matrix.
    #[arg(long)]
    pub save_iterate: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// spectrum, trajectory, sample-efficiency or rank-sweep.
    pub study: Study,
    /// JSON config merged over the study defaults.
    #[arg(long, conflicts_with = "replay")]
    pub config: Option<PathBuf>,
    /// Re-run the configuration recorded in a manifest.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Output directory (default ./out/<UTC timestamp>).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub shape: Option<Shape>,
    #[arg(long, value_delimiter = ',')]
    pub lambda1: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub inits: Vec<Init>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Probe {
    /// gamma, kappa, delta and mu from the spectral quantities.
    Constants(ConstantsArgs),
    /// Growth of rho(E_UV) / rho(E) with k for Gaussian noise.
    Lemma1(Lemma1Args),
    /// Whether the Rayleigh quotients of a saved run never decrease.
    Monotonicity(MonotonicityArgs),
    /// Contraction bounds along a SMART-PM run on A = Abar + E.
    Contraction(ContractionArgs),
    /// Flatness of the noise eigenmatrices.
    Assumption2(Assumption2Args),
    /// Perturbation bounds for A = Abar + E on a pair containing Xbar.
    Perturbation(PerturbationArgs),
    /// Rank-truncation error bound on random vectors.
    RankTrunc(RankTruncArgs),
}

#[derive(Debug, Args)]
pub struct ProbeOutput {
    /// Report file (default stdout).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConstantsArgs {
    /// Leading eigenvalue of Abar.
    #[arg(long)]
    pub lambda: f64,
    /// Eigen-gap of Abar.
    #[arg(long)]
    pub gap: f64,
    /// Projected noise norm rho(E_UV).
    #[arg(long)]
    pub rho: f64,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub kbar: usize,
    #[arg(long)]
    pub theta: f64,
    #[command(flatten)]
    pub out: ProbeOutput,
}

#[derive(Debug, Args)]
pub struct Lemma1Args {
    /// Side length; the noise is p^2 x p^2.
    #[arg(long)]
    pub p: usize,
    /// Rank values (default powers of two up to p).
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: ProbeOutput,
}

#[derive(Debug, Args)]
pub struct MonotonicityArgs {
    /// Report written by `solve`.
    #[arg(long)]
    pub report: PathBuf,
    /// The matrix the run used; when given its PSD-ness is checked.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// First iterate compared. The default skips the start, which need
    /// not satisfy the rank bound.
    #[arg(long, default_value_t = 1)]
    pub from_t: usize,
    #[command(flatten)]
    pub out: ProbeOutput,
}

/// Matrices of a perturbed instance.
#[derive(Debug, Args)]
pub struct Instance {
    /// Observed matrix A.
    #[arg(long)]
    pub matrix: PathBuf,
    /// Population matrix Abar; the noise is A - Abar.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub shape: Option<Shape>,
}

#[derive(Debug, Args)]
pub struct ContractionArgs {
    #[command(flatten)]
    pub instance: Instance,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    #[arg(long, default_value = "random")]
    pub init: Init,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[command(flatten)]
    pub out: ProbeOutput,
}

#[derive(Debug, Args)]
pub struct Assumption2Args {
    #[command(flatten)]
    pub instance: Instance,
    #[command(flatten)]
    pub out: ProbeOutput,
}

#[derive(Debug, Args)]
pub struct PerturbationArgs {
    #[command(flatten)]
    pub instance: Instance,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: ProbeOutput,
}

#[derive(Debug, Args)]
pub struct RankTruncArgs {
    /// Matricization `P1xP2`.
    #[arg(long)]
    pub shape: Shape,
    #[arg(long, default_value_t = 1)]
    pub kbar: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: ProbeOutput,
}
