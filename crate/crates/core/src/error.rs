use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("time step {tau:.3e} violates the {scheme} stability bound tau <= {bound:.3e}")]
    Stability { scheme: String, tau: f64, bound: f64 },

    #[error("scheme loses positivity: {0}")]
    Positivity(String),

    #[error("kernel lost mass: slice {slice} has negative mass {mass:.3e} beyond tolerance")]
    NegativeMass { slice: usize, mass: f64 },

    #[error("conditional density at node {node}, step {step} has non-positive mass")]
    EmptyRow { node: usize, step: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("linear solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("{0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

pub(crate) fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}
