use std::path::PathBuf;

/// Errors raised by the core library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("{what}: expected {expected} bytes, found {found}")]
    Length {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite value at unroll step {step}")]
    NumericOverflow { step: usize },
    #[error("non-finite loss {loss} at optimizer step {step} (learning rate {learning_rate})")]
    NonFiniteLoss {
        loss: f64,
        step: usize,
        learning_rate: f64,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad input data (as opposed to numeric failure).
    pub fn is_data_error(&self) -> bool {
        !matches!(
            self,
            Error::NumericOverflow { .. } | Error::NonFiniteLoss { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
