//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem data: {0}")]
    InvalidProblem(String),

    #[error("invalid risk measure: {0}")]
    InvalidRisk(String),

    #[error("linear program {0}")]
    Lp(String),

    #[error("quadratic program {0}")]
    Qp(String),

    #[error("cutting-plane solve failed: {0}")]
    Kelley(String),

    #[error("polyhedron error: {0}")]
    Polyhedron(String),

    #[error("scalarization failed: {0}")]
    Scalarization(String),

    #[error("bundle method failed: {0}")]
    Bundle(String),

    #[error("approximation algorithm failed: {0}")]
    Benson(String),

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("file format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
