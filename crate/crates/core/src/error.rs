use thiserror::Error;

#[derive(Debug, Error)]
pub enum HjmmError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("curves live on different grids")]
    GridMismatch,

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("numerical abort at t = {t}: {detail}")]
    NumericalAbort { t: f64, detail: String },

    #[error(
        "picard iteration on window starting at t = {window_start} did not converge after \
         {iterations} iterations (last contraction ratio {last_ratio:.4}, last distance {last_distance:.3e})"
    )]
    PicardNonConvergence {
        window_start: f64,
        iterations: usize,
        last_ratio: f64,
        last_distance: f64,
    },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = HjmmError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> HjmmError {
    HjmmError::InvalidParameter(msg.into())
}
