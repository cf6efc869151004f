use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An integral over an unbounded interval does not converge.
    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("too few exceedances: k = {k}, minimum is {min_k}")]
    TooFewExceedances { k: usize, min_k: usize },

    #[error("invalid event specification: {0}")]
    InvalidSpec(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: u64, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit code for the command-line front end.
    ///
    /// Configuration problems are usage errors (1), data problems map to 2
    /// and numerical failures to 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Numeric(_) | Error::Divergent(_) => 3,
            _ => 2,
        }
    }
}
