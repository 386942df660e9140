//! Command-line surface: dataset simulation, model fitting, experiment
//! running, and SVG plotting.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (missing or
//! malformed files), 3 numerical error (singular covariance, solver
//! failure, over-aggressive screening).

mod commands;
mod plot;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

/// Fixed default seed; reproducible by default, never wall-clock based.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Parser, Debug)]
#[command(
    name = "sdr",
    version,
    about = "Sliced inverse regression and screening-based dimension reduction"
)]
struct Cli {
    /// Seed for all stochastic behavior: a 64-bit integer, or 'random'.
    /// Defaults to 42; the SDR_SEED environment variable overrides the
    /// default (a --seed flag wins over both).
    #[arg(long, global = true)]
    seed: Option<String>,

    /// Worker threads for experiments (0 = all logical cores). The
    /// SDR_THREADS environment variable overrides the default.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset CSV (plus a sibling .truth.csv with the true basis).
    Simulate(commands::SimulateArgs),
    /// Fit an estimator to a dataset CSV and write a JSON report.
    Fit(commands::FitArgs),
    /// Run a replicated experiment from a JSON config.
    Experiment(commands::ExperimentArgs),
    /// Render a results CSV as an SVG line chart.
    Plot(commands::PlotArgs),
}

/// Seed resolution: flag > SDR_SEED env > fixed default.
fn resolve_seed(flag: &Option<String>) -> Result<(u64, String), String> {
    let (raw, source) = match flag {
        Some(v) => (v.clone(), "flag".to_string()),
        None => match std::env::var("SDR_SEED") {
            Ok(v) => (v, "env:SDR_SEED".to_string()),
            Err(_) => (DEFAULT_SEED.to_string(), "default".to_string()),
        },
    };
    if raw == "random" {
        return Ok((rand_seed(), format!("{source}:random")));
    }
    raw.parse::<u64>()
        .map(|s| (s, source))
        .map_err(|_| format!("seed must be a 64-bit integer or 'random', got '{raw}'"))
}

fn rand_seed() -> u64 {
    use std::time::{SystemTime, UNIX_EPOCH};
    // entropy for the explicit opt-out of reproducibility
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.subsec_nanos() as u64 ^ d.as_secs())
        .unwrap_or(0);
    nanos ^ ((std::process::id() as u64) << 32)
}

fn resolve_threads(flag: &Option<usize>) -> Result<(usize, String), String> {
    match flag {
        Some(v) => Ok((*v, "flag".to_string())),
        None => match std::env::var("SDR_THREADS") {
            Ok(v) => v
                .parse::<usize>()
                .map(|t| (t, "env:SDR_THREADS".to_string()))
                .map_err(|_| format!("SDR_THREADS must be an integer, got '{v}'")),
            Err(_) => Ok((0, "default".to_string())),
        },
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are successful exits; anything else is usage
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };

    let seed = match resolve_seed(&cli.seed) {
        Ok(s) => s,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let threads = match resolve_threads(&cli.threads) {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let ctx = commands::RunContext {
        seed: seed.0,
        seed_source: seed.1,
        threads: threads.0,
        threads_source: threads.1,
    };

    let outcome = match &cli.command {
        Command::Simulate(args) => commands::run_simulate(args, &ctx),
        Command::Fit(args) => commands::run_fit(args, &ctx),
        Command::Experiment(args) => commands::run_experiment(args, &ctx),
        Command::Plot(args) => commands::run_plot(args),
    };

    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
