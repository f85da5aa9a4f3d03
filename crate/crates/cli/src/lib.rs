//! Batch driver: configuration files, run directories, coverage studies and
//! diagnostics.

pub mod config;
pub mod coverage;
pub mod diagnose;
pub mod error;
pub mod output;
pub mod run;

pub use error::CliError;

/// Environment variable holding the worker-pool size.
pub const WORKERS_ENV: &str = "RSNL_WORKERS";

/// Size the global thread pool from `RSNL_WORKERS` when it is set.
pub fn init_workers() -> Result<Option<usize>, CliError> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(None);
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        CliError::Config(format!(
            "{WORKERS_ENV} must be a positive integer, got `{v}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot start {n} workers: {e}")))?;
    Ok(Some(n))
}
