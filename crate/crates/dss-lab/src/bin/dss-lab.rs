//! Command-line front end of the kinetic rod-suspension laboratory.
//!
//! Exit codes: 0 pass, 1 configuration or usage error, 2 threshold failure,
//! 3 solver failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand as ClapSubcommand};

use dss_lab::harness::{execute, exit_code_for, ExperimentConfig, Subcommand, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(
    name = "dss-lab",
    version,
    about = "Kinetic rod suspensions, closures and ordered-fluid limits"
)]
struct Cli {
    /// JSON experiment configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Size of the worker thread pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed of randomized fields, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, ClapSubcommand)]
enum Command {
    /// Ordered-fluid coefficients, viscometric predictions and quadrature cross-checks.
    Coeffs,
    /// Homogeneous rheometry sweeps against the second-order predictions.
    Rheometry,
    /// One kinetic run with diagnostics and field snapshots.
    Simulate,
    /// Eps sweep of kinetic runs against the hierarchical solution.
    Convergence,
    /// Eps sweep of Boussinesq against hierarchical solutions.
    BoussinesqCompare,
}

impl From<&Command> for Subcommand {
    fn from(c: &Command) -> Self {
        match c {
            Command::Coeffs => Subcommand::Coeffs,
            Command::Rheometry => Subcommand::Rheometry,
            Command::Simulate => Subcommand::Simulate,
            Command::Convergence => Subcommand::Convergence,
            Command::BoussinesqCompare => Subcommand::BoussinesqCompare,
        }
    }
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => code(EXIT_USAGE),
            };
        }
    };
    let mut cfg = match &cli.config {
        Some(p) => match ExperimentConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", p.display());
                return code(EXIT_USAGE);
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return code(EXIT_USAGE);
        }
    }
    let sub = Subcommand::from(&cli.command);
    match execute(sub, &cfg) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            println!("outputs in {}", outcome.out_dir.display());
            code(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            code(exit_code_for(&e))
        }
    }
}
