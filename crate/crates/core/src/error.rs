use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shift {shift} hits an eigenvalue (zero pivot after retries)")]
    ShiftHitsEigenvalue { shift: f64 },

    #[error("matrix is not symmetric: defect {defect:e} exceeds {tol:e}")]
    Asymmetric { defect: f64, tol: f64 },

    #[error("{solver} did not converge: {detail}")]
    NotConverged { solver: &'static str, detail: String },

    #[error("truncation check failed: {0}")]
    Truncation(String),

    #[error("identity violated: {0}")]
    IdentityViolation(String),

    #[error("design system ill-conditioned (condition {0:e})")]
    IllConditioned(f64),

    #[error("no bracketing minimum found: {0}")]
    NoBracket(String),

    #[error("argument {value} outside domain {domain}")]
    OutOfDomain { value: f64, domain: &'static str },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
