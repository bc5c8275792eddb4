use thiserror::Error;

pub type Result<T> = std::result::Result<T, GpcaError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpcaError {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite: eigenvalue {eigenvalue:.6e} below tolerance {tolerance:.3e}")]
    NotPositiveDefinite { eigenvalue: f64, tolerance: f64 },

    #[error("matrix is singular or numerically rank deficient (smallest singular value {smallest:.3e})")]
    Singular { smallest: f64 },

    #[error("matrix is not a rotation: {0}")]
    NotRotation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("tangent vector is not horizontal (residual {residual:.3e})")]
    NotHorizontal { residual: f64 },

    #[error("direction is degenerate (all eigenvalues of XA^-1 vanish)")]
    DegenerateDirection,

    #[error("unsupported dimension {0}: operation requires d = 2")]
    UnsupportedDimension(usize),

    #[error("time {t} outside admissible interval [{t_min}, {t_max}]")]
    OutOfInterval { t: f64, t_min: f64, t_max: f64 },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no remaining horizontal directions for component {order}")]
    NoRemainingDirections { order: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("parse error at line {line}, field {field}: {message}")]
    Parse { line: usize, field: usize, message: String },

    #[error("matrix {index} failed validation: {source}")]
    InvalidMatrix {
        index: usize,
        #[source]
        source: Box<GpcaError>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for GpcaError {
    fn from(e: std::io::Error) -> Self {
        GpcaError::Io(e.to_string())
    }
}
