mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "eqsadj", version, about = "Adjoint sensitivities of transient nonlinear EQS field problems")]
struct Cli {
    /// Worker threads for assembly and finite differences.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward and adjoint solve; writes sensitivities, quantities and probe traces.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Validate and report the grid size without solving.
        #[arg(long)]
        dry_run: bool,
    },
    /// Time-step convergence study against the analytic or FD oracle.
    Convergence {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Comma-separated N_main values; defaults to run.convergence_sweep.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<usize>>,
    },
    /// Compare every adjoint sensitivity with central finite differences.
    Check {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Print a built-in scenario as a config document.
    ExportScenario {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Check(String),
    Solver(String),
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn from_core(e: eqsadj::Error) -> Self {
        use eqsadj::Error;
        match e {
            Error::NewtonDiverged { .. } | Error::Solver { .. } | Error::Perturbed { .. } => {
                CliError::Solver(e.to_string())
            }
            Error::Io { .. } => CliError::Io(e.to_string()),
            Error::InvalidArgument(_) | Error::Parse { .. } => CliError::Config(e.to_string()),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Check(_) => "check",
            CliError::Solver(_) => "solver",
            CliError::Io(_) => "io",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Check(m) | CliError::Solver(m) | CliError::Io(m) => m,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if cli.threads == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))?;
    match cli.command {
        Command::Run { config, out, dry_run } => commands::run(&config, &out, dry_run),
        Command::Convergence { config, out, sweep } => commands::convergence(&config, &out, sweep),
        Command::Check { config, out, tolerance } => commands::check(&config, out.as_deref(), tolerance),
        Command::ExportScenario { name, out } => commands::export_scenario(&name, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.message() });
            eprintln!("{line}");
            ExitCode::from(e.exit_code())
        }
    }
}
