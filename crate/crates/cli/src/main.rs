//! `shrinkdetect` command-line driver.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 runtime
//! failure, 3 a reproduced table fell outside its reference bands.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shrinkdetect::report::TableId;
use shrinkdetect::reproduce::Scale;

#[derive(Parser, Debug)]
#[command(name = "shrinkdetect", version, about = "Shrinkage SRRS change-point detection experiments")]
pub struct Cli {
    /// Worker threads for Monte Carlo replications (results do not depend on it).
    #[arg(long, global = true, env = "SHRINKDETECT_THREADS")]
    pub threads: Option<usize>,

    /// Directory for all output files; overrides `out_dir` in the config.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every config-driven command; they take precedence over
/// the file.
#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replications: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Find the threshold meeting the configured ARL target.
    Calibrate(RunArgs),
    /// Estimate the null ARL at the configured fixed threshold.
    Arl(RunArgs),
    /// Estimate detection delays for every configured scenario.
    Delay(RunArgs),
    /// Sweep the linear shrinkage factor (fixed-threshold and calibrated sweeps).
    SweepC(RunArgs),
    /// Re-run a published table and compare it with the reference values.
    Reproduce {
        /// T1 .. T5
        table: TableId,
        #[arg(long, default_value = "desk")]
        scale: Scale,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Theoretical oracle shrinkage factor for a post-change mean vector.
    OracleC {
        /// Comma-separated post-change means.
        #[arg(long, value_delimiter = ',', required = true)]
        mu: Vec<f64>,
        /// Comma-separated shrinkage targets (one value is broadcast).
        #[arg(long, value_delimiter = ',', required = true)]
        omega: Vec<f64>,
        #[arg(long, default_value_t = 500.0)]
        arl: f64,
    },
    /// Print the overshoot function nu(x).
    Nu { x: f64 },
    /// Convergence diagnostic for the plug-in estimate under Q.
    Qcheck {
        #[arg(long, default_value_t = 0.5)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        #[arg(long, default_value_t = 100_000)]
        steps: u64,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "warn" } else { "info" }))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
