use thiserror::Error;

/// Every fallible operation in the crate reports one of these.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("result overflows f64: {0}")]
    Overflow(String),
    #[error("iteration did not converge: {0}")]
    NonConvergence(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    InvalidDimension(String),
    #[error("cross-section spectrum is not ascending: {0}")]
    NonAscendingSpectrum(String),
    #[error("operator is singular: {0}")]
    Singular(String),
    #[error("truncation too small: {0}")]
    Truncation(String),
    #[error("envelope violated: {0}")]
    EnvelopeViolation(String),
    #[error("base function has a non-decaying constant channel on the minus end")]
    ConstantChannelPresent,
    #[error("limit coefficient beta must be positive, got {0}")]
    BetaNonPositive(f64),
    #[error("fit unstable under refinement: {0}")]
    FitUnstable(String),
    #[error("finite-rank complement could not be chosen: {0}")]
    ComplementFailed(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("parameters lie on the boundary of the admissible region: {0}")]
    BoundaryCase(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code used by the command line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidDimension(_)
            | Error::NonAscendingSpectrum(_)
            | Error::Domain(_)
            | Error::Unsupported(_)
            | Error::Io(_) => 2,
            Error::NonConvergence(_) | Error::FitUnstable(_) | Error::Overflow(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
