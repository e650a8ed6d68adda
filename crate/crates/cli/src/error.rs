use std::path::PathBuf;

use osp_core::train::TrainError;
use thiserror::Error;

/// Failures surfaced by the command line, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(osp_core::Error),
    /// A loss or metric became non-finite.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => EXIT_NUMERIC,
            _ => EXIT_INPUT,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Parse { .. } => "parse",
            CliError::Io { .. } => "io",
            CliError::Core(_) => "input",
            CliError::Numeric(_) => "numeric",
        }
    }
}

impl From<osp_core::Error> for CliError {
    fn from(e: osp_core::Error) -> Self {
        match e {
            osp_core::Error::NonFinite { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Core(c) => c.into(),
            d @ TrainError::Diverged { .. } => CliError::Numeric(d.to_string()),
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

pub type CliResult<T> = std::result::Result<T, CliError>;
