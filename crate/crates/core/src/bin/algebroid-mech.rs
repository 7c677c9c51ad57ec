use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use algebroid_mech::cli::{self, Command, Invocation};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "algebroid-mech",
    version,
    about = "Second-order Lagrangian mechanics on Lie algebroids"
)]
struct Args {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML, or JSON with a .json extension).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides checks.seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Sub {
    /// Integrate the equations of motion and write the trajectory table.
    Simulate(Common),
    /// Check anchor compatibility and the Jacobi identity at sampled points.
    CheckStructure(Common),
    /// Recompute diagnostics of a stored trajectory and check conservation.
    CheckInvariants(Common),
    /// Round-trip dual points through the Tulczyjew isomorphism.
    Tulczyjew(Common),
    /// Test whether the subbundle built from an exact section is Lagrangian.
    LagrangianTest(Common),
    /// Run the constraint stabilization algorithm.
    Stabilize(Common),
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                cli::EXIT_USAGE as u8
            } else {
                0
            });
        }
    };
    let (command, common) = match args.command {
        Sub::Simulate(c) => (Command::Simulate, c),
        Sub::CheckStructure(c) => (Command::CheckStructure, c),
        Sub::CheckInvariants(c) => (Command::CheckInvariants, c),
        Sub::Tulczyjew(c) => (Command::Tulczyjew, c),
        Sub::LagrangianTest(c) => (Command::LagrangianTest, c),
        Sub::Stabilize(c) => (Command::Stabilize, c),
    };
    let outcome = cli::run(&Invocation {
        command,
        config: common.config,
        out: common.out,
        seed: common.seed,
    });
    let _ = std::io::stdout().write_all(outcome.stdout.as_bytes());
    let _ = std::io::stderr().write_all(outcome.stderr.as_bytes());
    ExitCode::from(outcome.code as u8)
}
