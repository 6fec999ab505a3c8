use std::io;
use std::path::{Path, PathBuf};

use crate::npy::NpyError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Core(#[from] topoprune_core::Error),
    #[error("{path}: {source}")]
    Npy { path: PathBuf, source: NpyError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("writing output: {0}")]
    Output(#[from] io::Error),
    #[error("serializing report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn npy(path: &Path, source: NpyError) -> Self {
        match source {
            NpyError::Io(e) => CliError::io(path, e),
            source => CliError::Npy { path: path.to_path_buf(), source },
        }
    }

    /// 2 for bad input, 3 for a prune schedule that cannot keep the
    /// spanning trees, 1 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(topoprune_core::Error::InfeasibleSchedule { .. }) => 3,
            CliError::Validation(_) | CliError::Core(_) | CliError::Npy { .. } => 2,
            CliError::Io { .. } | CliError::Output(_) | CliError::Json(_) | CliError::Csv(_) => 1,
        }
    }

    /// Short machine-readable tag printed with the message.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Npy { source, .. } => source.code(),
            CliError::Core(topoprune_core::Error::InfeasibleSchedule { .. }) => "infeasible-schedule",
            CliError::Validation(_) | CliError::Core(_) => "invalid-input",
            CliError::Io { .. } | CliError::Output(_) | CliError::Json(_) | CliError::Csv(_) => "io",
        }
    }
}
