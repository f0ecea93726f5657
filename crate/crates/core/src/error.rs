use thiserror::Error;

/// Errors raised by argument validation and I/O. Solver non-convergence is
/// not an error; it is reported through [`crate::solver::FitStatus`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("singular linear system (condition estimate {0:.3e})")]
    Singular(f64),
    #[error("response model fit did not converge ({0})")]
    NotConverged(&'static str),
    #[error("index {index} out of range for {len} units")]
    IndexOutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_len(what: &'static str, got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            what,
            got,
            expected,
        })
    }
}
