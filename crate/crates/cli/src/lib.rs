//! Experiment runner behind the `sledge-opt` binary: JSON configs in, CSV
//! traces and a `summary.json` out.

pub mod config;
pub mod error;
pub mod runner;
pub mod summary;

pub use config::{load, parse_config, prepare, Experiment, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use runner::{execute, output_dir, Command};
pub use summary::Summary;

/// Environment variable that shifts every configured seed.
pub const SEED_OFFSET_VAR: &str = "SLEDGE_OPT_SEED_OFFSET";

/// Reads the seed offset from the environment; unset means 0.
pub fn seed_offset_from_env() -> CliResult<i64> {
    match std::env::var(SEED_OFFSET_VAR) {
        Err(std::env::VarError::NotPresent) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::schema(SEED_OFFSET_VAR, format!("expected an integer, got {v:?}"))),
        Err(e) => Err(CliError::schema(SEED_OFFSET_VAR, e)),
    }
}
