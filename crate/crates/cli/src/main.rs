mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BenchmarkArgs, FitArgs, PredictArgs, SimulateArgs};

/// Sparse QDA and community Bayes classifiers.
#[derive(Debug, Parser)]
#[command(name = "sqda", version)]
struct Cli {
    /// Worker threads for replications, CV folds and block solves.
    #[arg(long, global = true, env = "SQDA_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate train/validation/test CSVs from a simulation design.
    Simulate(SimulateArgs),
    /// Fit a classifier to a labeled CSV.
    Fit(FitArgs),
    /// Predict classes and posteriors for a feature CSV.
    Predict(PredictArgs),
    /// Run a named benchmark and write its results table.
    Benchmark(BenchmarkArgs),
}

/// Failure categories mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Library(#[from] sqda::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Library(e) if e.is_io() => 3,
            CliError::Library(e) if e.is_numerical() => 2,
            CliError::Library(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn run(cli: Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Predict(a) => commands::predict(a),
        Command::Benchmark(a) => commands::benchmark(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
