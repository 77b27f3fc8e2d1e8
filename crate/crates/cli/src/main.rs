//! Command-line driver for the Atlas/Stefan solvers, simulator and checks.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 invalid
//! configuration or input, 3 numerical failure.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use commands::{Ctx, Outcome};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] atlas_stefan::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use atlas_stefan::Error as E;
        match self {
            CliError::Core(E::Numerical(_) | E::Overflow(_)) => 3,
            _ => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "atlas-stefan", version, about = "Atlas model and Stefan free boundary experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed(s) in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent jobs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the splitting and mild solvers.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate the particle system, one run per seed.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare particle runs with the continuum and run the property suite.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the randomized property suite alone.
    Props {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    };
    let ctx = Ctx { out: cli.out, seed: cli.seed, pool };
    let result = match &cli.command {
        Command::Solve { config } => commands::solve(config, &ctx),
        Command::Simulate { config } => commands::simulate_cmd(config, &ctx),
        Command::Verify { config } => commands::verify_cmd(config, &ctx),
        Command::Props { config } => commands::props(config.as_deref(), &ctx),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => {
            eprintln!("verification failed; see {}", ctx.out.display());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
