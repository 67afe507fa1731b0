use thiserror::Error;

/// Errors produced by the functional change-point library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ill-posed spline fit: {0}")]
    IllPosedFit(String),

    #[error("split index {k} outside 1..={max} for sample size {n}", max = .n.saturating_sub(1))]
    InvalidSplit { k: usize, n: usize },

    #[error("insufficient sample: need at least {needed} curves, got {n}")]
    InsufficientSample { n: usize, needed: usize },

    #[error("bias correction requires n >= 3, got {n}")]
    DegenerateCorrection { n: usize },

    #[error("degenerate kernel: no eigenvalue above the numerical floor")]
    DegenerateKernel,

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("critical-value table has no entry for d = {d}, alpha = {alpha}")]
    TableMiss { d: usize, alpha: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
