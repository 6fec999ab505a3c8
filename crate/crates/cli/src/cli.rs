use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "topoprune", version, about = "Topology-aware pruning analysis for neural network layers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Critical compression ratio of an architecture spec.
    Eta(EtaArgs),
    /// Neural persistence of one or more weight matrices.
    Np(NpArgs),
    /// Maximum spanning forest of a weight matrix.
    Mst(MstArgs),
    /// Lower bound on the spanning tree / top-weight overlap.
    Bound(BoundArgs),
    /// Probability that a random spanning tree overlaps the top weights in exactly w edges.
    Pmf(ProbArgs),
    /// Probability of an overlap of at least w edges.
    Tail(ProbArgs),
    /// Monte Carlo estimate of the overlap on random layers.
    Simulate(SimulateArgs),
    /// Measured overlap of weight matrices.
    Overlap(OverlapArgs),
    /// Magnitude or topology-preserving pruning mask for one layer.
    Prune(PruneArgs),
    /// Iterative pruning with retraining on a dense network.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct EtaArgs {
    #[arg(long)]
    pub arch: PathBuf,
    /// Compute convolution outputs as floor((s + 2p - f) / t), without the + 1.
    #[arg(long)]
    pub paper_literal_conv: bool,
    /// Per-layer rows.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NpArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub weights: Vec<PathBuf>,
    /// Norm order of the persistence p-norm.
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Directory receiving one `layer_<k>.csv` diagram per input.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MstArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Forest edges as CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    /// Fraction of non-zero weights, in (0, 1].
    #[arg(long)]
    pub sparsity: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ProbArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    /// Size of the top-weight set; defaults to m + n - 1.
    #[arg(long)]
    pub alpha: Option<usize>,
    #[arg(long)]
    pub w: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dist {
    Uniform01,
    GaussianAbs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = topoprune_core::overlap::DEFAULT_TRIALS)]
    pub trials: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Dist::Uniform01)]
    pub dist: Dist,
    /// Per-trial overlap fractions.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OverlapArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub weights: Vec<PathBuf>,
    /// One row per layer.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Mp,
    Timp,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub keep: usize,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Allow a T-IMP keep count below the spanning tree size.
    #[arg(long)]
    pub truncate: bool,
    /// Mask as a `|u1` NPY file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Masked weights as a `<f8` NPY file.
    #[arg(long)]
    pub pruned_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LoopKind {
    Imp,
    Timp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Relu,
    Tanh,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long = "loop", value_enum)]
    pub kind: LoopKind,
    /// Dense-only architecture spec.
    #[arg(long)]
    pub arch: PathBuf,
    /// Target sparsity in percent, in [0, 100).
    #[arg(long)]
    pub sparsity: f64,
    #[arg(long)]
    pub rounds: usize,
    /// Training iterations per round.
    #[arg(long)]
    pub iters: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    /// Remove a fixed fraction of the remaining weights each round.
    #[arg(long)]
    pub remaining: bool,
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    pub activation: ActivationArg,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Feature matrix (samples x inputs) in NPY; synthetic data when absent.
    #[arg(long, requires = "labels")]
    pub features: Option<PathBuf>,
    /// Integer class labels in NPY.
    #[arg(long, requires = "features")]
    pub labels: Option<PathBuf>,
    /// Samples of the synthetic task.
    #[arg(long, default_value_t = 600)]
    pub samples: usize,
    /// Noise of the synthetic task.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Fraction of samples held out for validation.
    #[arg(long, default_value_t = 0.25)]
    pub validation: f64,
    /// Checkpoint directory for the final network.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Per-round, per-layer metrics.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}
