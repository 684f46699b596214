use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0} vs {1}")]
    GridMismatch(String, String),

    #[error("unsupported grid: {0}")]
    UnsupportedGrid(String),

    #[error("spectrum is not Hermitian (residue {residue:.3e} exceeds {tolerance:.3e})")]
    NonHermitian { residue: f64, tolerance: f64 },

    #[error("cannot normalize a field with zero norm")]
    ZeroNorm,

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("only {found} admissible atom centers found, {wanted} requested")]
    InsufficientCenters { found: usize, wanted: usize },

    #[error("minimization failed: {0}")]
    Minimization(String),

    #[error("modulus data has zero total intensity")]
    ZeroIntensity,

    #[error("intensity concentrated at q = 0: infinite atom width")]
    InfiniteWidth,

    #[error("objects do not share a histogram")]
    HistogramMismatch,

    #[error("basis is not orthonormal (deviation {0:.3e})")]
    NonOrthonormal(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
