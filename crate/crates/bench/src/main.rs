//! `accsvrg`: dataset preparation, solver runs, sweeps, thread speed-up
//! studies and verification suites.
//!
//! Exit codes: 0 ok, 2 usage or input error, 3 divergence, 4 verification
//! failure, 1 anything else.

mod commands;
mod config;
mod error;
mod output;
mod solvers;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{PrepArgs, SpeedupArgs, SweepArgs, VerifyArgs};
use crate::config::RunArgs;
use crate::error::EXIT_OK;

#[derive(Parser)]
#[command(name = "accsvrg", version, about = "Sparse accelerated SVRG benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Print dataset statistics; optionally write a binary cache.
    Prep(PrepArgs),
    /// Run one solver and emit its trace CSV.
    Run(RunArgs),
    /// One trace per value of omega, mu or tau_tilde.
    Sweep(SweepArgs),
    /// Wall-clock time to a target per thread count.
    Speedup(SpeedupArgs),
    /// Run a verification suite and print JSON reports.
    Verify(VerifyArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Commands::Prep(a) => commands::cmd_prep(&a).map(|_| ()),
        Commands::Run(a) => commands::cmd_run(a),
        Commands::Sweep(a) => commands::cmd_sweep(a),
        Commands::Speedup(a) => commands::cmd_speedup(a).map(|_| ()),
        Commands::Verify(a) => commands::cmd_verify(&a).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("accsvrg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
