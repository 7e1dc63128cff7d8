use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lqvi::solvers::Algorithm;

mod bench;
mod crossroad;
mod output;
mod solve;

#[derive(Parser)]
#[command(name = "lqvi", version, about = "Affine VI solvers and constrained LQ games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solvers on random strongly monotone AVIs and record residual traces.
    Bench(BenchArgs),
    /// Solve one AVI from a JSON problem file.
    Solve(SolveArgs),
    /// Closed-loop receding-horizon simulation of the crossroad game.
    Crossroad(CrossroadArgs),
    /// Check a problem or game file without solving it.
    Validate(ValidateArgs),
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 10)]
    pub instances: usize,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub m: usize,
    /// Instance `k` is generated from seed `seed + k`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, default_value_t = lqvi::solvers::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long = "algos", value_delimiter = ',', default_values_t = Algorithm::ALL.to_vec())]
    pub algos: Vec<Algorithm>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Record wall-clock times (otherwise written as zero, keeping output
    /// byte-for-byte reproducible).
    #[arg(long)]
    pub timing: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct SolveArgs {
    /// AVI problem JSON.
    pub problem: PathBuf,
    #[arg(long = "algo", default_value_t = Algorithm::Dr)]
    pub algo: Algorithm,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = lqvi::solvers::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Where to write the solution JSON; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitialState {
    /// Staggered gaps and equal speeds.
    Default,
    Zero,
}

#[derive(Args)]
pub struct CrossroadArgs {
    /// Crossroad spec JSON; the built-in 15-vehicle scenario when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Use only the first N vehicles.
    #[arg(long)]
    pub vehicles: Option<usize>,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = InitialState::Default)]
    pub x0: InitialState,
    /// Prediction horizon; overrides the spec.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = lqvi::solvers::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Always run the solver, even inside the terminal set.
    #[arg(long)]
    pub no_terminal_shortcut: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FileKind {
    Avi,
    Game,
}

#[derive(Args)]
pub struct ValidateArgs {
    pub file: PathBuf,
    #[arg(long, value_enum, default_value_t = FileKind::Avi)]
    pub kind: FileKind,
}

/// Errors caused by the invocation rather than by the computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(a) => bench::run(&a),
        Command::Solve(a) => solve::run(&a),
        Command::Crossroad(a) => crossroad::run(&a),
        Command::Validate(a) => solve::validate(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
