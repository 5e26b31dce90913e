//! AR(1)-X mean / GARCH(p,q)-X variance estimation by Gaussian quasi maximum
//! likelihood.
//!
//! Estimation runs over the panel's masked hours, compressed into one
//! contiguous sample. Regressors enter lagged one hour and are standardized
//! over that sample; [`RegressorScaling`] maps coefficients back to raw units.

mod design;
mod fit;
mod optimize;
mod params;
mod recursion;

pub use design::{mean_residuals, ColumnScale, Objective, RegressorScaling, MIN_RESIDUAL_POINTS};
pub use fit::{fit, fit_with_observer, CovarianceKind, FitOptions, FitResult, Inference};
pub use optimize::{central_gradient, gradient_step};
pub use params::{
    from_unconstrained, param_names, to_unconstrained, GarchSpec, Layout, ParamVector,
};
pub use recursion::{
    exog_term, information_criteria, log_likelihood, sample_variance, variance_recursion,
    variance_step, InformationCriteria, VariancePath, VARIANCE_FLOOR,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("insufficient data: {n} estimation points, need at least {needed}")]
    InsufficientData { n: usize, needed: usize },
    #[error("column `{0}` is not in the panel")]
    UnknownColumn(String),
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("initial variance must be positive and finite")]
    NonPositiveInit,
    #[error("variance at position {0} is not positive")]
    NonPositiveVariance(usize),
    #[error("input lengths do not match")]
    LengthMismatch,
    #[error("parameter invariant violated: {0}")]
    InvariantViolation(String),
    #[error("information criteria need 1 <= k < n (k = {k}, n = {n})")]
    BadCounts { k: usize, n: f64 },
    #[error("regressor `{0}` is constant over the estimation sample")]
    ConstantRegressor(String),
    #[error("returns are constant over the estimation sample")]
    DegenerateReturns,
    #[error("optimizer did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("numerical Hessian is not positive definite")]
    HessianNotPD,
}
