use thiserror::Error;

/// Errors produced by objective construction, optimizer runs and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown objective id `{0}`")]
    UnknownObjective(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("missing constant: {0}")]
    MissingConstant(&'static str),
    #[error("layer index out of range: i={i}, j={j}, layers={layers}")]
    LayerIndexOutOfRange { i: usize, j: usize, layers: usize },
    #[error("region {0:?} lies outside the objective's valid region")]
    RegionOutsideValid(Vec<(f64, f64)>),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
