use thiserror::Error;

/// Errors raised by the homogenization toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or inadmissible configuration (grid sizes, ε gates, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// The obstacle violates the geometric setting.
    #[error("invalid obstacle: {0}")]
    Obstacle(String),

    /// Discretization cannot represent the geometry at this resolution.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// The periodic cell problem has no solution (e.g. no obstacle).
    #[error("incompatible cell problem: {0}")]
    Incompatible(String),

    /// An iterative solve did not reach its tolerance.
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e}): {context}")]
    NoConvergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    /// A time step was rejected; `suggested_dt` satisfies the stability policy.
    #[error("step rejected: {reason} (suggested dt {suggested_dt:.3e})")]
    StepRejected { reason: String, suggested_dt: f64 },

    /// The corrector argument of p^{-1} became non-positive: ε too large.
    #[error("epsilon too large: corrector pressure argument reaches {min_argument:.3e}")]
    EpsilonTooLarge { min_argument: f64 },

    /// A compatibility condition on initial data is violated.
    #[error("compatibility error: {0}")]
    Compatibility(String),

    /// A singular matrix was encountered.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// Fields defined on different grids were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A test field does not vanish where admissibility requires it.
    #[error("admissibility error: {0}")]
    Admissibility(String),

    /// A measured ratio grew beyond its bound across an ε sweep.
    #[error("bound violated: {0}")]
    BoundViolated(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
