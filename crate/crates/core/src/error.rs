use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A factorization or solve that cannot fail in exact arithmetic did.
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("empty search space: N = {n} exceeds N_r = {nr}")]
    EmptySearchSpace { nr: usize, n: usize },

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
