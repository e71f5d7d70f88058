//! Command-line harness: JSON configs, CSV panel ingestion and smoothing,
//! experiment runs and their result, diagnostic and forecast files.

pub mod config;
pub mod error;
pub mod panel_io;
pub mod run;
pub mod smooth;

pub use config::{ExperimentConfig, Mode};
pub use error::{CliError, Result};
pub use panel_io::{load_panel, save_panel, LabeledPanel};
pub use run::{run_experiment, run_with_threads, Results, RunOutcome};
pub use smooth::smooth_panel;

/// Environment variable that overrides `--threads`.
pub const THREADS_ENV: &str = "HDFTS_THREADS";

/// Thread count from the environment, then the flag, then the config.
pub fn resolve_threads(env: Option<&str>, flag: Option<usize>, config: Option<usize>) -> Result<Option<usize>> {
    match env.map(str::trim).filter(|v| !v.is_empty()) {
        Some(v) => match v.parse::<usize>() {
            Ok(t) if t > 0 => Ok(Some(t)),
            _ => Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        None => Ok(flag.or(config)),
    }
}
