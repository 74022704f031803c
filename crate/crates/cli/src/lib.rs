//! Configuration-driven experiment runner for the `ssm-mcmc` samplers.

pub mod config;
pub mod diagnose;
pub mod error;
pub mod models;
pub mod output;
pub mod report;
pub mod run;
pub mod trace_io;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use output::ResultRow;
pub use report::cmd_report;
pub use run::{cmd_run, cmd_simulate};

/// Environment variable setting the worker count when `--threads` is absent.
pub const THREADS_ENV: &str = "SSM_MCMC_THREADS";

/// Worker count: explicit value, else the number of logical cores.
pub fn resolve_threads(explicit: Option<usize>) -> usize {
    explicit
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
