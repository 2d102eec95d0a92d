use thiserror::Error;

/// Errors raised by the numerical kernels.
///
/// The variants split into input problems (bad shapes, violated
/// preconditions) and numerical failures (truncation, factorisation);
/// [`Error::is_numerical`] tells them apart so front-ends can map them to
/// different exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("coupling tensor is not bilinear (Γ^a_bc != Γ^a_cb)")]
    NotBilinear,

    #[error("transformed coupling tensor violates the trilinear condition (max defect {defect:.3e})")]
    NotTrilinear { defect: f64 },

    #[error("matrix is singular or numerically non-invertible: {0}")]
    Singular(String),

    #[error("Cholesky factorisation failed: covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("lattice sum did not converge: tail bound {bound:.3e} still above tolerance {tol:.3e} at K = {k}")]
    Truncation { k: usize, bound: f64, tol: f64 },

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("step rejected for stability: {0}")]
    Unstable(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular(_)
                | Error::NotPositiveDefinite
                | Error::Truncation { .. }
                | Error::InsufficientSamples(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
