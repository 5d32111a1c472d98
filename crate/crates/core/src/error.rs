use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature did not converge: achieved error {achieved:.3e}, requested {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("density inversion failed at x = {x}: {reason}")]
    Inversion { x: f64, reason: String },

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error(
        "covariance factorization failed after jitter escalation; smallest eigenvalue estimate {min_eigenvalue:.3e}"
    )]
    Factorization { min_eigenvalue: f64 },

    #[error("singular conditioning covariance")]
    SingularCovariance,

    #[error("{count} distinct points exceed the exact-synthesis cap of {cap}; use the grid fast path")]
    GridCap { count: usize, cap: usize },

    #[error("histogram needs {count} bins, above the cap of {cap}; widen the bins")]
    TooManyBins { count: usize, cap: usize },

    #[error("edge mass fraction {fraction:.3e} exceeds 1e-6; widen the grid to avoid wrap-around")]
    EdgeMass { fraction: f64 },

    #[error("criterion violated: d*H/alpha = {exponent} >= 1")]
    CriterionViolated { exponent: f64 },

    #[error("tail correction is {fraction:.1}% of the total; raise the frequency cutoff")]
    CutoffTooSmall { fraction: f64 },

    #[error("no power tail: {0}")]
    NoPowerTail(String),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
