use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "nettrack", version, about = "Tracking capacity, gain design and error analysis for networked estimators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Network tracking capacity and the (W, B) attaining it.
    Capacity(CapacityArgs),
    /// Scalar-gain capacity, optimal α and stabilizing α interval.
    Scalar(ScalarArgs),
    /// α interval from local spectral bounds.
    LocalAlpha(LocalArgs),
    /// Spectral-radius design by cone complementarity linearization.
    Lmi(LmiArgs),
    /// Monte Carlo simulation of the estimator.
    Simulate(SimulateArgs),
    /// Capacity over m-circulant graphs with canonical scalar observations.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelPreset {
    /// `n = N`, agent i observes coordinate i.
    CanonicalScalar,
    /// No observations.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug, Args)]
pub struct PlantArgs {
    /// Plant JSON file.
    #[arg(long, conflicts_with_all = ["graph", "model", "dim"])]
    pub plant: Option<PathBuf>,
    /// Graph grammar, e.g. `circulant:N=8,m=1`, `complete:N=3`, `edges:N=3;0-1,1-2`.
    #[arg(long, required_unless_present = "plant")]
    pub graph: Option<String>,
    #[arg(long, value_enum, default_value = "canonical-scalar")]
    pub model: ModelPreset,
    /// State dimension for `--model none`.
    #[arg(long)]
    pub dim: Option<usize>,
    /// System instability `‖A‖₂`; rescales `A` when given.
    #[arg(long)]
    pub a: Option<f64>,
}

#[derive(Clone, Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Write the output here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CapacityArgs {
    #[command(flatten)]
    pub plant: PlantArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct ScalarArgs {
    #[command(flatten)]
    pub plant: PlantArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LocalMethodArg {
    Auto,
    Circulant,
    Cycle,
}

#[derive(Debug, Args)]
pub struct LocalArgs {
    #[command(flatten)]
    pub plant: PlantArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, value_enum, default_value = "auto")]
    pub method: LocalMethodArg,
    /// `exact`, `degree` (2·max degree) or a known upper bound on λ_max(L).
    #[arg(long, default_value = "exact")]
    pub lambda_max: String,
    /// Hamiltonian cycle as a vertex list, e.g. `0,1,3,2`.
    #[arg(long, value_delimiter = ',')]
    pub cycle: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct LmiArgs {
    #[command(flatten)]
    pub plant: PlantArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub max_outer: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub lmi_tol: f64,
    /// Also stop once the trace objective is within 1e-3 of 2nN.
    #[arg(long)]
    pub trace_target: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    Scalar,
    Ntc,
    Performance,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub plant: PlantArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, value_enum, default_value = "scalar")]
    pub design: DesignArg,
    /// Scalar gain: `opt` or a number.
    #[arg(long, default_value = "opt")]
    pub alpha: String,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub allow_unstable: bool,
    /// Also write the per-step CSV series here.
    #[arg(long)]
    pub series: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepMode {
    Full,
    Scalar,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum, default_value = "scalar")]
    pub mode: SweepMode,
    /// Circulant parameters.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub m: Vec<usize>,
    /// Inclusive agent-count range `lo..hi` within 2..32.
    #[arg(long, default_value = "2..16")]
    pub n: String,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}
