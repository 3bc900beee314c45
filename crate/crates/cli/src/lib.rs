//! Config-driven front end for the `polyloc` audits.

pub mod config;
pub mod heatmap;
pub mod runner;

pub use config::{ConfigError, ExperimentConfig};
pub use runner::{run, RunError, RunOptions, RunReport, Subcommand};

/// Environment variable capping worker threads (0 or unset = automatic).
pub const THREADS_ENV: &str = "POLYLOC_THREADS";

/// Configures the global rayon pool from [`THREADS_ENV`].
pub fn init_threads() -> Result<usize, String> {
    let requested = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("{THREADS_ENV} must be a non-negative integer, got `{v}`"))?,
        Err(_) => 0,
    };
    if requested > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(requested)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(rayon::current_num_threads())
}
