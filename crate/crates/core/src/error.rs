use thiserror::Error;

/// Errors raised by the calibration, audit and estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("divergence generator `{name}` rejected: {reason}")]
    InvalidDivergence { name: String, reason: String },

    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),

    #[error("degenerate derivative: {0}")]
    DegenerateDerivative(String),

    #[error("brute-force oracle limited to n <= {max}, got n = {n}")]
    SizeGuard { n: usize, max: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

pub(crate) fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("{name} must lie in [0, 1], got {p}"));
    }
    Ok(())
}

pub(crate) fn check_open_probability(name: &str, p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return invalid(format!("{name} must lie in (0, 1), got {p}"));
    }
    Ok(())
}
