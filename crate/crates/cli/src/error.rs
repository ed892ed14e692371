use std::path::PathBuf;

use bpu_chess::ChessError;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] bpu_core::Error),
    #[error(transparent)]
    Chess(#[from] ChessError),
    /// A rerun produced outputs that differ from the recorded run.
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) | CliError::Io { .. } => EXIT_DATA,
            CliError::Core(e) | CliError::Chess(ChessError::Core(e)) => {
                if e.is_data_error() {
                    EXIT_DATA
                } else {
                    EXIT_NUMERIC
                }
            }
            CliError::Chess(_) => EXIT_DATA,
            CliError::Mismatch(_) => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
