use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

use sparsecv::crossval::{DEFAULT_K_DETECT, DEFAULT_WINDOW};
use sparsecv::solver::{DEFAULT_DELTA, DEFAULT_MAX_SWEEPS};
use sparsecv::PenaltyKind;

use crate::grid::{AGrid, LambdaGrid};

/// Sparse regression with SCAD/MCP/LASSO penalties, approximate
/// leave-one-out CV and replica phase diagrams.
#[derive(Debug, Parser)]
#[command(name = "sparsecv", version, propagate_version = true)]
#[command(after_help = "Set SPARSECV_WORKERS to bound the number of worker threads.\n\
Exit codes: 0 success, 1 usage or input error, 2 numerical failure.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic instance and write it as a data directory.
    Gen(GenArgs),
    /// Solve a regularisation path with lambda annealing.
    Fit(FitArgs),
    /// Approximate LOO CV along a path, with instability detection.
    Cv(CvArgs),
    /// Phase diagram in the (lambda, a) plane.
    Phase(PhaseArgs),
    /// Approximate-vs-literal CV studies on synthetic data.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Lasso,
    Scad,
    Mcp,
}

impl From<KindArg> for PenaltyKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Lasso => PenaltyKind::Lasso,
            KindArg::Scad => PenaltyKind::Scad,
            KindArg::Mcp => PenaltyKind::Mcp,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EnsembleArgs {
    /// Ratio M/N of rows to columns.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Fraction of nonzero signal components.
    #[arg(long, default_value_t = 0.2)]
    pub rho0: f64,
    /// Variance of the nonzero signal components.
    #[arg(long = "sigma-x2", default_value_t = 1.0)]
    pub sigma_x2: f64,
    /// Noise variance.
    #[arg(long = "sigma-d2", default_value_t = 0.1)]
    pub sigma_d2: f64,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of columns N.
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Data directory (y.csv, A.csv, optional x0.csv) or a single CSV whose
    /// first column is the response.
    #[arg(long)]
    pub data: PathBuf,
    /// Centre the data and scale columns to unit norm before fitting.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Scad)]
    pub kind: KindArg,
    /// `L:eps` for L points from max|a_j^T y| down to eps times that, or an
    /// explicit comma-separated list.
    #[arg(long = "lambda-grid", default_value = "100:0.01")]
    pub lambda_grid: LambdaGrid,
    /// Convergence threshold on the largest coordinate change per sweep.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long = "max-sweeps", default_value_t = DEFAULT_MAX_SWEEPS)]
    pub max_sweeps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Switching parameter of SCAD/MCP (ignored for LASSO).
    #[arg(long, default_value_t = 3.0)]
    pub a: f64,
    /// Also write every coefficient.
    #[arg(long)]
    pub coefficients: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectRule {
    OneStdError,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// One value or a comma-separated list of switching parameters.
    #[arg(long, default_value = "3", value_delimiter = ',')]
    pub a: Vec<f64>,
    /// Add literal LOO columns (k-fold with --kfold).
    #[arg(long)]
    pub literal: bool,
    /// Use k-fold CV for the literal columns.
    #[arg(long)]
    pub kfold: Option<usize>,
    #[arg(long = "k-detect", default_value_t = DEFAULT_K_DETECT)]
    pub k_detect: f64,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    /// Choose a model over all curves.
    #[arg(long, value_enum)]
    pub select: Option<SelectRule>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhaseMode {
    Empirical,
    Theory,
}

#[derive(Debug, Args)]
pub struct PhaseArgs {
    #[arg(long, value_enum)]
    pub mode: PhaseMode,
    #[arg(long, value_enum, default_value_t = KindArg::Scad)]
    pub kind: KindArg,
    /// `lo:hi:n` for n evenly spaced values, or a comma-separated list.
    #[arg(long = "a-grid", default_value = "2.05:20:40")]
    pub a_grid: AGrid,
    /// `L:eps` or an explicit list. In theory mode the grid starts at
    /// --lambda-max.
    #[arg(long = "lambda-grid")]
    pub lambda_grid: Option<LambdaGrid>,
    /// Top of the theory-mode lambda grid.
    #[arg(long = "lambda-max", default_value_t = 10.0)]
    pub lambda_max: f64,
    /// Data for empirical mode.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long = "max-sweeps", default_value_t = DEFAULT_MAX_SWEEPS)]
    pub max_sweeps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "k-detect", default_value_t = DEFAULT_K_DETECT)]
    pub k_detect: f64,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    /// Damping of the fixed-point iteration.
    #[arg(long, default_value_t = sparsecv::replica::DEFAULT_DAMPING)]
    pub damping: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Study {
    Nmse,
    LambdaC,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value_t = Study::Nmse)]
    pub study: Study,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    #[arg(long, value_enum, default_value_t = KindArg::Scad)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 4.0)]
    pub a: f64,
    /// Target lambda of the nmse study.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Problem sizes N.
    #[arg(long, value_delimiter = ',', default_value = "50,100,200,400,800")]
    pub sizes: Vec<usize>,
    /// Instances per size.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long = "k-detect", default_value_t = DEFAULT_K_DETECT)]
    pub k_detect: f64,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long)]
    pub out: PathBuf,
}
