use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical error{}: {message}", .iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Numerical {
        message: String,
        iteration: Option<usize>,
    },

    #[error("degenerate column {0}: zero diagonal in the row subproblem")]
    DegenerateColumn(usize),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>, iteration: Option<usize>) -> Self {
        Error::Numerical {
            message: msg.into(),
            iteration,
        }
    }

    /// True for malformed input (bad files, bad parameters) as opposed to solver failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::Parse { .. } | Error::Io { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
