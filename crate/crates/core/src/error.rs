use thiserror::Error;

/// Errors raised by every `nvsk` operation.
///
/// Variants split into input problems (bad parameters, malformed files) and
/// failures of the numerics themselves; the CLI maps the former to exit
/// code 1 and the latter to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Invalid(String),

    #[error("line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{path}: {message}")]
    Format { path: String, message: String },

    #[error("{0}")]
    Computation(String),

    #[error("no convergence after {iterations} iterations (cost {cost:.6e}, last relative step {step:.3e})")]
    NoConvergence {
        iterations: usize,
        cost: f64,
        step: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn computation(msg: impl Into<String>) -> Self {
        Error::Computation(msg.into())
    }

    /// True for errors caused by user input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_) | Error::Config { .. } | Error::Format { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
