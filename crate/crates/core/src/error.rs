use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("derivative order {order} exceeds smoothness order r = {r}")]
    OrderTooHigh { order: usize, r: usize },

    #[error("point is outside the domain of the inverse branch: {0}")]
    Domain(String),

    #[error("word is not admissible at position {position}")]
    NotAdmissible { position: usize },

    #[error("infinite-word prefix too short: need {needed} letters, got {got}")]
    PrefixTooShort { needed: usize, got: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("target diameter {gamma} not reached within {max_level} refinement levels")]
    DiameterUnreachable { gamma: f64, max_level: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("boundary mass {mass:.3e} exceeds tolerance {tol:.3e}; periodisation would alias")]
    BoundaryMass { mass: f64, tol: f64 },

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("fit refused: {0}")]
    FitRefused(String),
}
