//! `carstat`: analysis and simulation for stratified randomized
//! experiments.
//!
//! Subcommands:
//! - `analyze`: estimate ATEs from a dataset CSV and report tests with
//!   homoskedasticity-only, HC0, and corrected standard errors;
//! - `simulate`: reproduce a shipped rejection-rate reference table;
//! - `moments`: compute a model's population moments to a cache file;
//! - `power`: limiting local power curves for Wald tests.
//!
//! Exit codes: 0 success, 2 input/validation error, 3 estimation error,
//! 4 reference-check failure.

mod analyze;
mod dataio;
mod moments_cmd;
mod power_cmd;
mod simulate;

use clap::{Parser, Subcommand};

/// A command failure carrying its process exit code.
#[derive(Debug)]
pub struct CmdError {
    pub code: i32,
    pub message: String,
}

impl CmdError {
    pub fn input(message: impl Into<String>) -> Self {
        CmdError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn estimation(message: impl Into<String>) -> Self {
        CmdError {
            code: 3,
            message: message.into(),
        }
    }

    pub fn check(message: impl Into<String>) -> Self {
        CmdError {
            code: 4,
            message: message.into(),
        }
    }

    pub fn from_core(err: carstat::Error) -> Self {
        use carstat::Error::*;
        let code = match &err {
            EmptyCell { .. } | EmptyGroup(_) | SingularDesign(_) | SingularStudentizer { .. }
            | MissingMeanCache { .. } | RetriesExhausted { .. } | InvalidCovariance(_)
            | BlockOverflow { .. } => 3,
            GridMismatch(_) => 4,
            _ => 2,
        };
        CmdError {
            code,
            message: err.to_string(),
        }
    }
}

impl From<carstat::Error> for CmdError {
    fn from(err: carstat::Error) -> Self {
        CmdError::from_core(err)
    }
}

impl From<std::io::Error> for CmdError {
    fn from(err: std::io::Error) -> Self {
        CmdError::input(err.to_string())
    }
}

/// Output rendering for tabular results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    /// Aligned human-readable table (values rounded for display).
    Table,
    /// Full-precision CSV.
    Csv,
}

#[derive(Parser)]
#[command(
    name = "carstat",
    about = "ATE estimation and exact inference under covariate-adaptive randomization",
    version
)]
struct Cli {
    /// Worker threads for simulation (default: CARSTAT_THREADS or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a dataset CSV (header y,a,s) and report ATE inference.
    Analyze(analyze::AnalyzeArgs),
    /// Run a rejection-rate study reproducing a shipped reference table.
    Simulate(simulate::SimulateArgs),
    /// Estimate population moments of an outcome model to a cache file.
    Moments(moments_cmd::MomentsArgs),
    /// Compute limiting local power of Wald tests.
    Power(power_cmd::PowerArgs),
}

fn main() {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("CARSTAT_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        // Ignore failure: the global pool may already exist in tests.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global();
    }
    let result = match cli.command {
        Command::Analyze(args) => analyze::run(args),
        Command::Simulate(args) => simulate::run(args),
        Command::Moments(args) => moments_cmd::run(args),
        Command::Power(args) => power_cmd::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}

/// Full-precision float formatting used in every CSV the tool writes.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write `text` to `path`, or to stdout when no path is given.
pub fn write_output(path: Option<&std::path::Path>, text: &str) -> Result<(), CmdError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(CmdError::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
