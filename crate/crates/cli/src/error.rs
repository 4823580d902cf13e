use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or inconsistent configuration, arguments or input values.
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("WAV error on {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn wav(path: &Path, source: hound::Error) -> Self {
        match source {
            hound::Error::IoError(e) => CliError::io(path, e),
            other => CliError::Wav {
                path: path.to_path_buf(),
                source: other,
            },
        }
    }

    /// 1 for configuration problems, 2 for file-system and file-format problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. } | CliError::Wav { .. } => 2,
        }
    }
}

impl From<arraysep::Error> for CliError {
    fn from(e: arraysep::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
