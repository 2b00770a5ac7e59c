use thiserror::Error;

/// Errors raised by model construction, filtering and smoothing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("power integral has no closed form for {0} likelihood")]
    NotClosedForm(&'static str),

    #[error("all particle weights vanished at step {step}")]
    DegenerateWeights { step: usize },

    #[error("backward kernel degenerate at step {step}")]
    DegenerateBackwardKernel { step: usize },

    #[error("numerical failure at step {step}: {message}")]
    Numerical { step: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
