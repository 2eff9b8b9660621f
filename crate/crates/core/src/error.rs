use thiserror::Error;

#[derive(Debug, Error)]
pub enum OtError {
    #[error("degenerate measure: total mass is zero")]
    DegenerateMeasure,
    #[error("negative mass {value} at atom {index}")]
    NegativeMass { index: usize, value: f64 },
    #[error("zero-weight atom at index {0}")]
    ZeroWeight(usize),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("empty measure")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point {index} is not on the unit sphere (norm {norm})")]
    NotOnSphere { index: usize, norm: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("instance too large for exact oracle: {cells} cells exceeds cap {cap}")]
    TooLarge { cells: usize, cap: usize },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("unknown solver `{0}`")]
    UnknownSolver(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("image decode: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, OtError>;
