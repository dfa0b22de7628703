use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Schema or cross-field violation; `path` names the offending field.
    #[error("{path}: {message}")]
    Schema { path: String, message: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0} run(s) failed")]
    RunsFailed(usize),
}

impl CliError {
    pub fn schema(path: impl Into<String>, message: impl ToString) -> Self {
        CliError::Schema { path: path.into(), message: message.to_string() }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { context: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema { .. } => 2,
            CliError::Io { .. } => 3,
            CliError::RunsFailed(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
