use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("mode {mode} out of range for a {order}-way tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("duplicate mode {0} in Tucker product")]
    DuplicateMode(usize),

    #[error("non-finite entry at flat index {0}")]
    NonFinite(usize),

    #[error("matrix is not positive definite (pivot {pivot:e} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("triangular factor has non-positive diagonal entry {value:e} at {index}")]
    NonPositiveDiagonal { index: usize, value: f64 },

    #[error("matrix is not orthogonal (max deviation {0:e})")]
    NotOrthogonal(f64),

    #[error("determinant constraint violated: |det - 1| = {0:e}")]
    Determinant(f64),

    #[error("degrees of freedom {nu} must exceed {min}")]
    DegreesOfFreedom { nu: f64, min: f64 },

    #[error("Kronecker product dimension {dim} exceeds cap {cap}")]
    KronCapExceeded { dim: usize, cap: usize },

    #[error("mode-{mode} cross-product is singular: {source}")]
    SingularMode {
        mode: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Numerical failures (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NonPositiveDiagonal { .. }
                | Error::SingularMode { .. }
                | Error::Determinant(_)
        )
    }
}
