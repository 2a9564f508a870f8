use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:.3e})")]
    Asymmetric { max_asymmetry: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.6e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:.6e})")]
    NotPd { min_eigenvalue: f64 },

    #[error("{what} is numerically singular (condition estimate {condition:.3e})")]
    Singular { what: &'static str, condition: f64 },

    #[error("normal matrix AᵀWA is singular (condition estimate {condition:.3e})")]
    SingularNormalMatrix { condition: f64 },

    #[error(
        "Fisher information matrix is singular (condition estimate {condition:.3e}, null space dimension {})",
        null_space.len()
    )]
    SingularInformation {
        condition: f64,
        /// Orthonormal basis of the numerical null space.
        null_space: Vec<Vec<f64>>,
    },

    #[error("posterior information matrix is singular (condition estimate {condition:.3e})")]
    SingularPosterior { condition: f64 },

    #[error("prior cannot be sampled (information-only prior)")]
    NotSampleable,

    #[error("prior does not supply an information matrix J_s")]
    NoPriorInfo,

    #[error("prior sampler has no score function")]
    NoScore,

    #[error("MMSE requires Gaussian prior")]
    MmseRequiresGaussian,

    #[error("joint information routes disagree (relative residual {residual:.3e}, route {route})")]
    RouteDisagreement { route: &'static str, residual: f64 },

    #[error("algebraic forms disagree (relative residual {residual:.3e})")]
    FormDisagreement { residual: f64 },

    #[error("noise cross-correlation is inadmissible (largest singular value of rho {sigma_max:.12})")]
    Inadmissible { sigma_max: f64 },

    #[error("no admissible Lagrange multiplier for budget {budget}: attainable range is [{min_budget}, {max_budget})")]
    NoRoot {
        budget: f64,
        min_budget: f64,
        max_budget: f64,
    },

    #[error("budget equation does not depend on the multiplier (all singular values of rho equal one)")]
    DegenerateBudget,

    #[error("degenerate placement: {0}")]
    Degenerate(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("report output failed: {0}")]
    Report(String),
}
