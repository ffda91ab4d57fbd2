use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("quadrature resolution {given} too small, need at least {required}")]
    ResolutionTooSmall { given: usize, required: usize },

    #[error("truncation Λ_max = {given} does not cover the request, need Λ_max ≥ {required}")]
    TruncationTooSmall { given: f64, required: f64 },

    #[error("inconsistent caps: {0}")]
    InconsistentCaps(String),

    #[error("operator not invertible: {0}")]
    NotInvertible(String),

    #[error("exponent window violated: {0}")]
    OutsideWindow(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<ndarray_linalg::error::LinalgError> for LabError {
    fn from(err: ndarray_linalg::error::LinalgError) -> Self {
        LabError::Linalg(err.to_string())
    }
}
