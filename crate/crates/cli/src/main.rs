//! `ergolab`: transfer-operator analyses and limit-theorem checks for
//! one-dimensional maps.

// `!(x > 0.0)` is used on purpose so that NaN takes the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ergolab_core::stats::Verdict;
use ergolab_core::Error;

use commands::{Failure, Output};
use config::{Flags, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "ergolab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Invariant density on the quadrature grid.
    Density,
    /// Norm decay of transfer iterates and condition flags.
    Decay,
    /// Resolvent martingale decomposition and coboundary test.
    Gordin,
    /// σ by Green–Kubo, variance growth and the martingale norm.
    Sigma,
    /// Kolmogorov–Smirnov test of the normalized Birkhoff sums.
    Clt,
    /// Functional tests on the rescaled paths.
    Fclt,
    /// The full pipeline with a single report.
    Verify,
    /// Summary of the reports in the output directory.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Density => "density",
            Command::Decay => "decay",
            Command::Gordin => "gordin",
            Command::Sigma => "sigma",
            Command::Clt => "clt",
            Command::Fclt => "fclt",
            Command::Verify => "verify",
            Command::Report => "report",
        }
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_CONVERGENCE: u8 = 3;
const EXIT_ANALYSIS: u8 = 4;
const EXIT_VERIFICATION: u8 = 5;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Parse(_)
        | Error::InvalidInput(_)
        | Error::IncompatibleGrids(_)
        | Error::Domain { .. } => EXIT_CONFIG,
        _ if e.is_convergence() => EXIT_CONVERGENCE,
        _ => EXIT_ANALYSIS,
    }
}

fn run(cli: &Cli) -> Result<Verdict, Failure> {
    let staged = |error| Failure { stage: "config", error };
    let cfg = if matches!(cli.command, Command::Report) && cli.flags.map.is_none() && cli.flags.config.is_none() {
        let mut cfg = RunConfig {
            map: "report".to_string(),
            ..RunConfig::default()
        };
        if let Some(out) = &cli.flags.out {
            cfg.out = out.clone();
        }
        cfg
    } else {
        RunConfig::from_flags(&cli.flags).map_err(staged)?
    };
    let threads = cfg
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| staged(Error::Config(format!("thread pool: {e}"))))?;
    let out = Output::new(&cfg.out, cli.command.name(), threads).map_err(|error| Failure {
        stage: "output",
        error,
    })?;
    match cli.command {
        Command::Density => commands::density(&cfg, &out),
        Command::Decay => commands::decay(&cfg, &out),
        Command::Gordin => commands::gordin(&cfg, &out),
        Command::Sigma => commands::sigma(&cfg, &out),
        Command::Clt => commands::clt(&cfg, &out),
        Command::Fclt => commands::fclt(&cfg, &out),
        Command::Verify => commands::verify(&cfg, &out),
        Command::Report => commands::report(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::Fail) => {
            eprintln!("{}: verification failed", cli.command.name());
            ExitCode::from(EXIT_VERIFICATION)
        }
        Err(f) => {
            eprintln!("{} failed in stage '{}': {}", cli.command.name(), f.stage, f.error);
            ExitCode::from(exit_code(&f.error))
        }
    }
}
