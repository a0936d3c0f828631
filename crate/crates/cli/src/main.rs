use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use homlab_cli::config::Kind;
use homlab_cli::{execute, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "homlab", version, about = "Homogenization experiments for compressible flow in perforated domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the cell problem and report the permeability tensor
    Cell(Common),
    /// Solve the homogenized Darcy problem
    Limit(Common),
    /// Solve the perforated Navier-Stokes problem for each epsilon
    Nse(Common),
    /// Measure the convergence rate over an epsilon sweep
    Rate(Common),
    /// Run the invariant suite
    Check(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides io.output
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let (kind, c) = match cli.command {
        Command::Cell(c) => (Kind::Cell, c),
        Command::Limit(c) => (Kind::Limit, c),
        Command::Nse(c) => (Kind::Nse, c),
        Command::Rate(c) => (Kind::Rate, c),
        Command::Check(c) => (Kind::Check, c),
    };
    ExitCode::from(execute(kind, &c.config, c.out, c.jobs) as u8)
}
