use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("iteration did not converge: {0}")]
    Convergence(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("degenerate channel realization: {0}")]
    Degenerate(String),
    #[error("rank contract violated: {0}")]
    RankViolation(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
