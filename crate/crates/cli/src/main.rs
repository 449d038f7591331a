//! Command-line front end for qctrlkit.

mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "qctrlkit", version, about = "Quantum control: simulation, filter functions, optimization, spectroscopy and identification")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "QCTRLKIT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Noisy ensemble simulation of a control.
    Simulate(SimulateArgs),
    /// Filter function of a control for one noise operator.
    FilterFunction(FilterArgs),
    /// Multi-start minimization of a cost graph.
    Optimize(OptimizeArgs),
    /// Noise spectrum from measured infidelities.
    Reconstruct(ReconstructArgs),
    /// Maximum-likelihood Hamiltonian parameter estimation.
    Identify(IdentifyArgs),
    /// Builders for the bundled physical systems.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub control: PathBuf,
    #[arg(long)]
    pub channels: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub trials: usize,
    /// One-column CSV of sample times (t_seconds).
    #[arg(long)]
    pub times: PathBuf,
    /// Output prefix: writes <out>_populations.csv, <out>_density.json and
    /// <out>_manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Interpolate noise onto a grid with this step (s) instead of holding
    /// each sample.
    #[arg(long)]
    pub sampling_step: Option<f64>,
    /// Basis state the system starts in.
    #[arg(long, default_value_t = 0)]
    pub initial_state: usize,
    /// PSD resolutions are given in Hz.
    #[arg(long)]
    pub hz: bool,
}

#[derive(Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub control: PathBuf,
    /// Noise operator as a matrix of [re, im] pairs.
    #[arg(long)]
    pub noise_operator: PathBuf,
    /// Diagonal 0/1 projector; defaults to the full space.
    #[arg(long)]
    pub projector: Option<PathBuf>,
    /// One-column CSV of frequencies (rad/s, or Hz with --hz).
    #[arg(long)]
    pub freqs: PathBuf,
    /// Time samples of the toggling-frame operator.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub hz: bool,
}

#[derive(Args)]
pub struct OptimizeArgs {
    /// Cost graph, optionally with "stop" criteria and an "initial" point.
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long)]
    pub starts: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ReconstructArgs {
    /// Filter-function values on the partition grid, one row per control.
    #[arg(long, conflicts_with_all = ["controls", "noise_operators"])]
    pub sensitivity: Option<PathBuf>,
    /// Controls whose sensitivity rows are computed in-process.
    #[arg(long, num_args = 1.., requires = "noise_operators")]
    pub controls: Vec<PathBuf>,
    /// One noise operator per partition channel.
    #[arg(long, num_args = 1..)]
    pub noise_operators: Vec<PathBuf>,
    #[arg(long)]
    pub projector: Option<PathBuf>,
    /// One-column CSV of measured infidelities.
    #[arg(long)]
    pub infidelities: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long)]
    pub partition: PathBuf,
    /// Fixed regularization weight for co; the L-curve picks it otherwise.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Relative singular-value cutoff for svd.
    #[arg(long)]
    pub cutoff: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Partition bounds are given in Hz.
    #[arg(long)]
    pub hz: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum MethodArg {
    Svd,
    Co,
}

#[derive(Args)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub experiments: PathBuf,
    /// CSV with columns value,std_dev, one row per experiment.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub starts: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand)]
pub enum ScenarioCommand {
    /// Writes the control, cost graph or experiment set of a scenario.
    Build(ScenarioBuildArgs),
    /// Lists scenario names and their frequency parameters.
    List,
}

#[derive(Args)]
pub struct ScenarioBuildArgs {
    pub name: String,
    /// Inline JSON object or a path to a JSON file.
    #[arg(long)]
    pub params: Option<String>,
    #[arg(long, default_value = "problem.json")]
    pub out: PathBuf,
    /// Frequency parameters are given in Hz.
    #[arg(long)]
    pub hz: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::FilterFunction(a) => commands::filter_function(&a),
        Command::Optimize(a) => commands::optimize(&a),
        Command::Reconstruct(a) => commands::reconstruct(&a),
        Command::Identify(a) => commands::identify(&a),
        Command::Scenario(ScenarioCommand::Build(a)) => commands::scenario_build(&a),
        Command::Scenario(ScenarioCommand::List) => commands::scenario_list(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
