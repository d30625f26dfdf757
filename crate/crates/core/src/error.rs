use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("iteration {iteration}{}: {source}", process.map(|d| format!(", process {d}")).unwrap_or_default())]
    Chain {
        iteration: usize,
        process: Option<usize>,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end: 2 for bad input,
    /// 3 for numerical failure, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_)
            | Error::Precondition(_)
            | Error::Shape(_)
            | Error::Validation(_) => 2,
            Error::Numerical(_) | Error::Invariant(_) => 3,
            Error::Io { .. } => 1,
            Error::Chain { source, .. } => source.exit_code(),
        }
    }

    /// Attach the chain position to an error raised inside a sweep.
    pub(crate) fn at(self, iteration: usize, process: Option<usize>) -> Self {
        match self {
            e @ Error::Chain { .. } => e,
            e => Error::Chain {
                iteration,
                process,
                source: Box::new(e),
            },
        }
    }
}
