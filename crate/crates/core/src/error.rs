use thiserror::Error;

/// Errors raised by the estimation toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("negativity {epsilon} is unreachable with mixing p = {p}")]
    UnreachableNegativity { epsilon: f64, p: f64 },

    #[error("derivative is singular: {0}")]
    DerivativeSingularity(String),

    #[error("degenerate measurement angles (alpha = {alpha}, beta = {beta})")]
    DegenerateAngles { alpha: f64, beta: f64 },

    #[error("empty sample: {0}")]
    EmptySample(&'static str),

    #[error("degenerate diagonal counts: r3 = {r3}, R = {total}")]
    DegenerateDiagonal { r3: u64, total: u64 },

    #[error("records mix different measurement settings")]
    MixedSettings,

    #[error("ill-posed tomography settings: {0}")]
    IllPosedSettings(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
