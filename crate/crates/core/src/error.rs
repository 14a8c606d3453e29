use crate::samplers::SamplerReport;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "quadrature did not reach tolerance {tol:e} on [{a}, {b}]: estimate {estimate:e}, \
         error {error:e} after {intervals} subintervals"
    )]
    Quadrature {
        a: f64,
        b: f64,
        tol: f64,
        estimate: f64,
        error: f64,
        intervals: usize,
    },

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("sampler failed: {reason}")]
    Sampler {
        reason: String,
        report: Box<SamplerReport>,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
