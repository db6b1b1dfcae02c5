use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// An iterative solver hit its iteration cap. `residuals` holds the best
    /// residual values the solver reached, in solver-specific order.
    #[error("{solver} did not converge after {iterations} iterations (residuals {residuals:?})")]
    SolverFailure {
        solver: &'static str,
        iterations: usize,
        residuals: Vec<f64>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

pub(crate) fn ensure_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::invalid(format!(
            "{what}: dimension mismatch (got {got}, expected {expected})"
        )));
    }
    Ok(())
}
