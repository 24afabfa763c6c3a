use thiserror::Error;

/// Errors produced by the numerical stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0} (expected 1 or 2)")]
    UnsupportedDimension(usize),

    #[error("grid spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("sample count must be positive")]
    ZeroSamples,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("potential field must be normalized (grid minimum 0) before this operation")]
    NotNormalized,

    #[error("source node {0} lies outside the grid")]
    SourceOutsideGrid(usize),

    #[error("bracket failure: support gap {gap} < 0 at mu_hi = {mu_hi}")]
    BracketFailure { mu_hi: f64, gap: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("CFL condition violated: {0}")]
    CflViolation(String),

    #[error("epsilon {epsilon} under-resolved by spacing {spacing} (need h <= eps/8)")]
    UnderResolved { epsilon: f64, spacing: f64 },

    #[error("gradient {gradient:?} exits the tabulated momentum range")]
    GradientOutOfRange { gradient: Vec<f64> },

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
