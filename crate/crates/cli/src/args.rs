use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sbmatch::couplings::CouplingKind;

#[derive(Debug, Parser)]
#[command(name = "sbmatch", version, about = "Schrödinger bridge matching with Gaussian-mixture potentials")]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Print progress messages.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a potential by bridge matching and write a JSON checkpoint.
    Train(TrainArgs),
    /// Draw endpoints or trajectories from a checkpoint.
    Sample(SampleArgs),
    /// Compute an evaluation metric and print key=value lines.
    Eval(EvalArgs),
    /// Write samples from a closed-form Gaussian entropic OT plan.
    Oracle(OracleArgs),
    /// Write a synthetic dataset.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlanArg {
    Independent,
    Minibatch,
    Paired,
}

impl From<PlanArg> for CouplingKind {
    fn from(p: PlanArg) -> Self {
        match p {
            PlanArg::Independent => CouplingKind::Independent,
            PlanArg::Minibatch => CouplingKind::MinibatchOt,
            PlanArg::Paired => CouplingKind::Paired,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Source samples (CSV, one row per point). With `--plan paired` and no
    /// `--paired-target`, a pairs file whose rows are x0 followed by x1.
    #[arg(long)]
    pub source: PathBuf,
    /// Target samples; not used with `--plan paired`.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Row-aligned partner of `--source` for `--plan paired`.
    #[arg(long)]
    pub paired_target: Option<PathBuf>,
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value_t = 100)]
    pub components: usize,
    #[arg(long, value_enum, default_value_t = PlanArg::Independent)]
    pub plan: PlanArg,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Initial component variance scale.
    #[arg(long, default_value_t = 0.1)]
    pub init_scale: f64,
    /// Largest bridge time drawn during training.
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Overwrite the output checkpoint every N iterations.
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    /// Checkpoint path (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Loss trace path; defaults to the checkpoint path with a `.trace.csv` suffix.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleMode {
    Plan,
    Sde,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Starting points, one trajectory per row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = SampleMode::Plan)]
    pub mode: SampleMode,
    /// Comma-separated output times in [0, 1], starting at 0 and ending at 1.
    #[arg(long, default_value = "0,1")]
    pub times: String,
    /// Euler–Maruyama steps on [0, 1]; required for `--mode sde`.
    #[arg(long)]
    pub sde_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    BwUvp,
    CbwUvp,
    Energy,
    Dynkl,
    DriftXcheck,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// Checkpoint for cbw-uvp, dynkl and drift-xcheck.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Oracle JSON written by `sbmatch oracle`, for cbw-uvp and dynkl.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// First sample file for bw-uvp (model) and energy.
    #[arg(long)]
    pub a: Option<PathBuf>,
    /// Second sample file for bw-uvp (reference) and energy.
    #[arg(long)]
    pub b: Option<PathBuf>,
    /// Query points for drift-xcheck; standard normal draws when absent.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Source probes for cbw-uvp.
    #[arg(long, default_value_t = 1000)]
    pub probes: usize,
    /// Permutations for the energy test; 0 reports the statistic only.
    #[arg(long, default_value_t = 0)]
    pub permutations: usize,
    /// Samples per time for dynkl.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Evaluation times for dynkl.
    #[arg(long, default_value_t = 51)]
    pub t_points: usize,
    #[arg(long, default_value_t = 200)]
    pub sde_steps: usize,
    /// Monte-Carlo draws per drift-xcheck query.
    #[arg(long, default_value_t = 100_000)]
    pub mc_samples: usize,
    /// Number of drift-xcheck queries when `--points` is absent.
    #[arg(long, default_value_t = 20)]
    pub queries: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-time CSV for dynkl.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleType {
    Gaussian,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long = "type", value_enum, default_value_t = OracleType::Gaussian)]
    pub kind: OracleType,
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub eps: f64,
    /// Source mean: one value (broadcast) or `dim` comma-separated values.
    #[arg(long, default_value = "0")]
    pub m0: String,
    #[arg(long, default_value = "0")]
    pub m1: String,
    /// Source covariance: a scalar (times I), `dim` values (diagonal) or `dim²` values (row-major).
    #[arg(long, default_value = "1")]
    pub c0: String,
    #[arg(long, default_value = "1")]
    pub c1: String,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Writes `<P>_src.csv`, `<P>_tgt.csv`, `<P>_paired.csv` and `<P>_oracle.json`.
    #[arg(long)]
    pub out_prefix: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dataset {
    SwissRoll,
    Gaussian,
    EightGaussians,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub dataset: Dataset,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Dimension of the gaussian dataset.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Mean of the gaussian dataset (broadcast scalar or comma list).
    #[arg(long, default_value = "0")]
    pub mean: String,
    /// Standard deviation (gaussian, eight-gaussians).
    #[arg(long)]
    pub std: Option<f64>,
    /// Swiss-roll noise before rescaling.
    #[arg(long, default_value_t = 0.8)]
    pub noise: f64,
    /// Ring radius of eight-gaussians.
    #[arg(long, default_value_t = 1.5)]
    pub radius: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}
