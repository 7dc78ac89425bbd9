//! `palign`: command-line front end for the particle and envelope
//! integrators, the region constructions, exponent fits and sweeps.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "palign", version, about = "Flocking with nonlinear velocity alignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the particle system.
    Simulate(SimulateArgs),
    /// Integrate the diameter envelope, raw or rescaled.
    Envelope(EnvelopeArgs),
    /// Print thresholds and regions for a parameter point.
    Regions(RegionsArgs),
    /// Print the scenario class of `(p, α)`.
    Classify(ClassifyArgs),
    /// Fit decay and growth exponents on a trajectory file.
    Fit(FitArgs),
    /// Run a batch sweep described by a config file.
    Sweep(SweepArgs),
    /// Containment or Lyapunov checks on a trajectory file.
    Check(CheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KernelFamily {
    #[value(name = "constant", alias = "constant_floor")]
    Constant,
    #[value(name = "smooth_tail", alias = "smooth")]
    SmoothTail,
    #[value(name = "capped_power", alias = "capped")]
    CappedPower,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Constant => "constant_floor",
            KernelFamily::SmoothTail => "smooth_tail",
            KernelFamily::CappedPower => "capped_power",
        }
    }
}

/// Model flags shared by the integrating subcommands.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Nonlinearity exponent of `Φ(z) = |z|^{p-2} z`.
    #[arg(long, required_unless_present = "config")]
    pub p: Option<f64>,
    /// Tail exponent of the kernel.
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = KernelFamily::SmoothTail)]
    pub kernel: KernelFamily,
    /// Value of the constant kernel.
    #[arg(long, default_value_t = 1.0)]
    pub floor: f64,
    /// Cap radius of the capped power kernel.
    #[arg(long, default_value_t = palign_core::model::DEFAULT_R_MIN)]
    pub r_min: f64,
    /// Override the tail lower constant.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Override the kernel upper bound.
    #[arg(long = "Lambda")]
    pub big_lambda: Option<f64>,
    /// Override the tail radius.
    #[arg(long = "R")]
    pub r_tail: Option<f64>,
    /// Total mass.
    #[arg(long, default_value_t = 2.0)]
    pub mass: f64,
    /// Read model parameters from a `key = value` file instead.
    #[arg(long, conflicts_with_all = ["p", "lambda", "big_lambda", "r_tail"])]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Initial spatial diameter.
    #[arg(long, visible_alias = "x0", default_value_t = 1.0)]
    pub d0: f64,
    /// Initial velocity diameter.
    #[arg(long, default_value_t = 1.0)]
    pub v0: f64,
    /// Final time (in `τ` for rescaled envelope coordinates).
    #[arg(long, default_value_t = 1e4)]
    pub t_end: f64,
    /// Number of output samples.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Space the samples linearly instead of logarithmically.
    #[arg(long)]
    pub linear: bool,
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long)]
    pub rtol: Option<f64>,
    /// Output directory; the trajectory CSV goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// File name prefix inside `--out`.
    #[arg(long, default_value = "run")]
    pub runid: String,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of agents; more than two are drawn at random.
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the `1/N` normalized coupling instead of the mass weights.
    #[arg(long)]
    pub uniform: bool,
    /// Also record positions and velocities of every agent.
    #[arg(long)]
    pub snapshots: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CoordsArg {
    #[value(name = "raw")]
    Raw,
    #[value(name = "S1", alias = "s1")]
    S1,
    #[value(name = "Sb", alias = "sb")]
    Sb,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BoundArg {
    Exact,
    Lower,
    Upper,
}

#[derive(Args, Debug)]
pub struct EnvelopeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value_t = CoordsArg::Raw)]
    pub coords: CoordsArg,
    /// Interaction law: the kernel itself or its tail bounds.
    #[arg(long, value_enum, default_value_t = BoundArg::Exact)]
    pub bound: BoundArg,
    /// Alignment constant; defaults to `2^{2-p}` times the total mass.
    #[arg(long = "C")]
    pub c: Option<f64>,
    /// Keep the drift term of the log-rescaled system.
    #[arg(long)]
    pub keep_drift: bool,
}

#[derive(Args, Debug)]
pub struct RegionsArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Lower rate constant `λC`.
    #[arg(long = "lambdaC", default_value_t = 1.0)]
    pub lambda_c: f64,
    /// Upper rate constant `ΛC`; defaults to `λC`.
    #[arg(long = "LambdaC")]
    pub big_lambda_c: Option<f64>,
    #[arg(long, visible_alias = "x0")]
    pub d0: Option<f64>,
    #[arg(long)]
    pub v0: Option<f64>,
    /// Exponent for the `p > 3` floor construction.
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
}

#[derive(Args, Debug)]
pub struct TrajectoryInput {
    /// Trajectory file (`.csv` or `.json`). A CSV picks up model metadata
    /// from a `.json` file with the same stem when present.
    pub input: PathBuf,
    /// Override `p` from the metadata.
    #[arg(long)]
    pub p: Option<f64>,
    /// Override `α` from the metadata.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub traj: TrajectoryInput,
    /// Fit window `LO HI`; defaults to the last two decades.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub window: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Sweep configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CheckKind {
    /// Upper invariant region of the `p > 3` rescaled system.
    #[value(name = "region-a-s1")]
    RegionAS1,
    /// Lower invariant region of the `p > 3` rescaled system.
    #[value(name = "region-b-s1")]
    RegionBS1,
    /// Invariant box of the `p = 3` log-rescaled system.
    #[value(name = "region-sb")]
    RegionSb,
    /// Fat-tail flocking bound, `2 <= p < 3`.
    #[value(name = "fat-tail")]
    FatTail,
    /// Flocking box for subcritical `2 < p < 3` data.
    #[value(name = "box")]
    Box,
    /// No-alignment floors, `2 < p < 3` supercritical or `p > 3`.
    #[value(name = "floors")]
    Floors,
    /// Monotonicity of the Lyapunov functional, `2 <= p < 3`.
    #[value(name = "lyapunov")]
    Lyapunov,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub traj: TrajectoryInput,
    #[arg(long, value_enum)]
    pub kind: CheckKind,
    /// Override the lower rate constant read from the metadata.
    #[arg(long = "lambdaC")]
    pub lambda_c: Option<f64>,
    /// Override the upper rate constant read from the metadata.
    #[arg(long = "LambdaC")]
    pub big_lambda_c: Option<f64>,
    /// Exponent for the `p > 3` floor construction.
    #[arg(long)]
    pub gamma: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Envelope(a) => commands::envelope(a),
        Command::Regions(a) => commands::regions(a),
        Command::Classify(a) => commands::classify(a),
        Command::Fit(a) => commands::fit(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Check(a) => commands::check(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
