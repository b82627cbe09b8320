use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Input lies outside the region where the model is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("fixed point did not converge after {iterations} iterations (last residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    /// A conditional probability was requested on an event of probability zero.
    #[error("undefined conditional: {0}")]
    UndefinedConditional(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("duplicate station id {0}")]
    DuplicateStation(u32),

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
