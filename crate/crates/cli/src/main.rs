use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use mor2s::Error;

mod commands;
mod config;

use config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "mor2s", version, about = "Two-sided POD-DEIM model reduction benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Allow the vectorized baseline above its grid-size limit.
    #[arg(long, global = true)]
    override_memory_guard: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compare basis procedures on an analytic function (phi1, phi2, phi3).
    Funcapprox,
    /// Offline phase: bases, interpolation indices, artifacts.
    Reduce,
    /// Online phase from saved artifacts, with reference errors.
    Solve {
        /// Artifact directory (defaults to the output directory).
        #[arg(long, value_name = "DIR")]
        artifacts: Option<PathBuf>,
    },
    /// Full-order integration only.
    Full,
    /// Snapshot counts against the truncation tolerance.
    SweepTau,
    /// Offline/online breakdown plus the online cost scan.
    Bench,
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Integrity(_) | Error::Format(_) | Error::Io(_) => 4,
        Error::Config(_) | Error::Domain(_) | Error::MemoryGuard(_) | Error::Unsupported(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut ov = Overrides {
        config: cli.config,
        set: cli.set,
        out: cli.out,
        seed: cli.seed,
        override_memory_guard: cli.override_memory_guard,
    };
    if let Command::Solve { artifacts: Some(dir) } = &cli.command {
        ov.set.push(format!("artifacts={}", dir.display()));
    }
    let result = RunConfig::load(&ov).and_then(|cfg| match cli.command {
        Command::Funcapprox => commands::cmd_funcapprox(&cfg),
        Command::Reduce => commands::cmd_reduce(&cfg),
        Command::Solve { .. } => commands::cmd_solve(&cfg),
        Command::Full => commands::cmd_full(&cfg),
        Command::SweepTau => commands::cmd_sweep_tau(&cfg),
        Command::Bench => commands::cmd_bench(&cfg),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
