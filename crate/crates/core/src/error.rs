use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GapError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is not Hermitian")]
    NotHermitian,
    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("not-spectral-II: {0}")]
    NotSpectralII(String),
    #[error("L-not-found: E(N) stays >= 1/2 up to N = {0}")]
    LNotFound(usize),
    #[error("dimension {dim} exceeds the dense cap {cap}")]
    CapExceeded { dim: usize, cap: usize },
    #[error("martingale-fails-at-l: epsilon*sqrt(l) = {0} >= 1")]
    MartingaleFails(f64),
    #[error("not a member: {0}")]
    NotMember(String),
    #[error("not-found: {0}")]
    NotFound(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, GapError>;
