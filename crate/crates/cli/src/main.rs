//! `dihedral`: simulations, lemma checks and cost estimates for the dihedral coset
//! problem.
//!
//! Exit codes: 0 ran, 1 a verification failed, 2 bad configuration, 3 every
//! simulated run ran out of budget.

mod estimate;
mod output;
mod simulate;
mod verify;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(std::io::Error),
    Runtime(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<dihedral::Error> for CliError {
    fn from(e: dihedral::Error) -> Self {
        match e {
            dihedral::Error::InvalidParameter(_) | dihedral::Error::Precondition(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dihedral", version, about = "Dihedral coset problem simulator and cost estimator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Seeded simulation runs of a DCP algorithm.
    Simulate(simulate::SimulateArgs),
    /// Monte Carlo or exact checks of the analytic lemmas.
    Verify(verify::VerifyArgs),
    /// Cost-model exponents and optimized merging trees.
    #[command(subcommand)]
    Estimate(estimate::EstimateCmd),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Verify(a) => verify::run(a),
        Command::Estimate(c) => estimate::run(c),
    };
    let code = match result {
        Ok(code) => code,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            EXIT_CONFIG
        }
        Err(CliError::Io(e)) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_FAIL
        }
    };
    ExitCode::from(code as u8)
}
