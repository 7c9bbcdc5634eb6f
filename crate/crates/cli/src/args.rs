use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use earlystop::datagen::{AdditiveKind, BoostSignal, SignalKind, GRAVITY_DEFAULT_DEPTH};
use earlystop::simulation::BoostRule;
use earlystop::conjugate_gradients::DEFAULT_COMPUTATION_THRESHOLD;

/// Early stopping for iterative estimators: data generation, single runs and
/// Monte-Carlo studies.
#[derive(Debug, Parser)]
#[command(name = "earlystop", version, propagate_version = true)]
pub struct Cli {
    /// Flat key=value file supplying flag defaults; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic data set as CSV.
    #[command(subcommand)]
    Datagen(DatagenKind),
    /// Fit one instance and print a one-line summary.
    #[command(subcommand)]
    Estimate(EstimatorCommand<SingleRun>),
    /// Run a seeded Monte-Carlo study and write one record per replication.
    #[command(subcommand)]
    Replicate(EstimatorCommand<StudyRun>),
    /// Phillips or gravity study of tSVD, Landweber and CG discrepancy stops.
    #[command(args_override_self = true)]
    Compare(CompareArgs),
    /// Wall time of a fixed number of iterations per estimator and problem.
    #[command(args_override_self = true)]
    Bench(BenchArgs),
}

#[derive(Debug, Subcommand)]
pub enum DatagenKind {
    /// Diagonal problem with singular values j^(-1/2).
    #[command(args_override_self = true)]
    Diagonal {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// supersmooth, smooth or rough
        #[arg(long, default_value = "smooth")]
        signal: SignalKind,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        #[command(flatten)]
        output: DatagenOutput,
    },
    /// Discretized Phillips test problem (n divisible by 4).
    #[command(args_override_self = true)]
    Phillips {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[command(flatten)]
        output: DatagenOutput,
    },
    /// One-dimensional gravity surveying problem.
    #[command(args_override_self = true)]
    Gravity {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = GRAVITY_DEFAULT_DEPTH)]
        depth: f64,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        #[command(flatten)]
        output: DatagenOutput,
    },
    /// Gaussian linear model with a sparse coefficient vector.
    #[command(args_override_self = true)]
    Linear {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        p: usize,
        /// gamma<k> or s<k>, e.g. gamma3 or s60
        #[arg(long, default_value = "gamma3")]
        signal: BoostSignal,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[command(flatten)]
        output: DatagenOutput,
    },
    /// Additive regression model on [-2.5, 2.5]^30.
    #[command(args_override_self = true)]
    Additive {
        /// smooth, step, linear or hills
        #[arg(long, default_value = "smooth")]
        kind: AdditiveKind,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[command(flatten)]
        output: DatagenOutput,
    },
}

#[derive(Debug, Args)]
pub struct DatagenOutput {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Vectors in long format: vector,index,value.
    #[arg(long)]
    pub out: PathBuf,
    /// Design or covariate matrix, row-major below an n,p header.
    #[arg(long)]
    pub design_out: Option<PathBuf>,
}

/// Estimators shared by `estimate` and `replicate`; `R` holds the run flags.
#[derive(Debug, Subcommand)]
pub enum EstimatorCommand<R: Args> {
    /// Truncated singular value decomposition.
    #[command(args_override_self = true)]
    Tsvd {
        #[command(flatten)]
        problem: InverseArgs,
        #[command(flatten)]
        run: R,
    },
    /// Landweber iteration.
    #[command(args_override_self = true)]
    Landweber {
        #[command(flatten)]
        problem: InverseArgs,
        /// Step size; defaults to 1/‖A‖².
        #[arg(long)]
        learning_rate: Option<f64>,
        #[command(flatten)]
        run: R,
    },
    /// Conjugate gradients on the normal equation.
    #[command(args_override_self = true)]
    Cg {
        #[command(flatten)]
        problem: InverseArgs,
        /// Stop at the interpolated crossing time.
        #[arg(long)]
        interpolate: bool,
        /// Emergency-stop threshold for ‖Aᵀr‖².
        #[arg(long, default_value_t = DEFAULT_COMPUTATION_THRESHOLD)]
        threshold: f64,
        #[command(flatten)]
        run: R,
    },
    /// L2-boosting (orthogonal matching pursuit).
    #[command(args_override_self = true)]
    Boost {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        p: usize,
        /// gamma1, gamma2, gamma3, s15, s60 or s90
        #[arg(long, default_value = "gamma3")]
        signal: BoostSignal,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// dp, rr, dp2step or rr2step
        #[arg(long, default_value = "dp")]
        rule: BoostRule,
        /// Critical value; defaults to the scaled-lasso noise estimate.
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        #[command(flatten)]
        run: R,
    },
    /// Breadth-first regression tree.
    #[command(args_override_self = true)]
    Tree {
        /// smooth, step, linear or hills
        #[arg(long, default_value = "smooth")]
        kind: AdditiveKind,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Critical value; defaults to sigma².
        #[arg(long)]
        kappa: Option<f64>,
        /// Stop at the interpolated crossing time.
        #[arg(long)]
        interpolate: bool,
        /// Deepest level considered; defaults to n.
        #[arg(long)]
        max_iter: Option<usize>,
        /// Held-out points for the test error; defaults to n.
        #[arg(long)]
        test_size: Option<usize>,
        #[arg(long, default_value_t = 1)]
        min_samples_split: usize,
        #[command(flatten)]
        run: R,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InverseProblem {
    Diagonal,
    Phillips,
    Gravity,
}

#[derive(Debug, Args)]
pub struct InverseArgs {
    #[arg(long, value_enum, default_value_t = InverseProblem::Diagonal)]
    pub problem: InverseProblem,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    /// Diagonal-problem signal: supersmooth, smooth or rough.
    #[arg(long, default_value = "smooth")]
    pub signal: SignalKind,
    /// Gravity source depth.
    #[arg(long, default_value_t = GRAVITY_DEFAULT_DEPTH)]
    pub depth: f64,
    /// Critical value; defaults to n·delta².
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Iteration cap; defaults to n.
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SingleRun {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct StudyRun {
    #[arg(long, default_value_t = 100)]
    pub mc_runs: usize,
    /// Replication i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub cores: usize,
    /// Record CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional quartile summary CSV.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Skip balanced and classical oracles.
    #[arg(long)]
    pub no_oracles: bool,
    /// Record wall time per replication (output is then not reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CompareProblem {
    Phillips,
    Gravity,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, value_enum, default_value_t = CompareProblem::Phillips)]
    pub problem: CompareProblem,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Critical value; defaults to n·delta².
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 100)]
    pub mc_runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub cores: usize,
    /// Directory receiving one record CSV per estimator and summary.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the table as CSV instead of printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
