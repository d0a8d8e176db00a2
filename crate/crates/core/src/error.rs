use thiserror::Error;

/// Errors raised by the allocation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph is not weight-balanced and strongly connected: {0}")]
    GraphAssumption(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("solver did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("fixed-point map is not contracting (ratio {ratio:.4} for 3 consecutive iterations); eps={eps} is likely too large for this problem")]
    NonContraction { eps: f64, ratio: f64 },

    #[error("numerical blowup at t={t}")]
    Blowup { t: f64 },

    #[error("step size underflow at t={t} (h={h:e}); the system is too stiff for the explicit integrator, reduce max_step to a fraction of eps")]
    Stiffness { t: f64, h: f64 },

    #[error("rate fit needs at least {needed} usable samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("series is below the numerical floor everywhere; already converged")]
    AlreadyConverged,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_check(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::InvalidDimension(format!(
            "{what}: expected length {expected}, got {got}"
        )))
    }
}
