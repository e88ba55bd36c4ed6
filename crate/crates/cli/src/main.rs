//! `singctrl`: solve, sweep, refine and compare singular control problems.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{Overrides, RunConfig};

type Handler = fn(&RunConfig) -> Result<(), CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "singctrl",
    version,
    about = "Total-variation regularized direct transcription for singular control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve once and write trajectory.csv, report.json and solver.log.
    Solve(RunArgs),
    /// Solve for each penalty in --rho and write sweep.csv plus one directory per value.
    Sweep(RunArgs),
    /// Refine the mesh over --steps and fit the error decay.
    Convergence(RunArgs),
    /// Solve and overlay the analytic solution.
    Compare(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// fishery, plant or sir.
    #[arg(long)]
    problem: Option<String>,
    /// Plant case: 2a, 2b or 2c.
    #[arg(long)]
    case: Option<String>,
    /// Number of mesh intervals.
    #[arg(long)]
    n: Option<usize>,
    /// Stationarity tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap for the solver.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Penalty weights, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    rho: Option<Vec<f64>>,
    /// polyhedral or prox-tv.
    #[arg(long)]
    backend: Option<String>,
    /// Constant initial control, one value or one per channel.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    initial: Option<Vec<f64>>,
    /// Mesh steps for the convergence study, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    steps: Option<Vec<f64>>,
    /// Flat TOML file with run settings and parameter overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl From<RunArgs> for Overrides {
    fn from(a: RunArgs) -> Self {
        Overrides {
            problem: a.problem,
            case: a.case,
            n: a.n,
            tol: a.tol,
            max_iters: a.max_iters,
            rho: a.rho,
            backend: a.backend,
            initial: a.initial,
            out: a.out,
            steps: a.steps,
            config: a.config,
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("SINGCTRL_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        config::config(format!(
            "SINGCTRL_THREADS: expected a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| config::config(format!("SINGCTRL_THREADS: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let (command, args): (Handler, RunArgs) = match cli.command {
        Command::Solve(a) => (commands::solve, a),
        Command::Sweep(a) => (commands::sweep, a),
        Command::Convergence(a) => (commands::convergence, a),
        Command::Compare(a) => (commands::compare, a),
    };
    let cfg = RunConfig::load(&args.into())?;
    command(&cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("singctrl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
