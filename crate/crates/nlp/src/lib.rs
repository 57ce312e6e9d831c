//! Primal-dual interior-point solver for smooth nonlinear programs.
//!
//! The method follows the filter line-search interior-point design: slack
//! variables for inequality rows, a log-barrier on all bounds, Newton steps on
//! the primal-dual system factored with a sparse LDLᵀ (with inertia
//! correction), a filter globalization with second-order corrections, and a
//! feasibility restoration phase that doubles as the infeasibility detector.

mod derivcheck;
mod ipm;
mod kkt;
pub mod ldl;
mod problem;
mod restoration;
mod scaled;

pub use derivcheck::{check_derivatives, sample_interior, DerivativeReport};
pub use problem::{constraint_violation, NlpProblem, NlpResult, Status};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NlpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
}

/// Solver settings.
#[derive(Debug, Clone)]
pub struct Options {
    /// Largest accepted constraint violation in the user's units.
    pub feas_tol: f64,
    /// Largest accepted scaled KKT error.
    pub opt_tol: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    /// Minimum relative distance of the starting point from its bounds.
    pub bound_push: f64,
    /// Minimum distance from a bound as a fraction of the bound interval.
    pub bound_frac: f64,
    /// Gradient-based scaling of objective and constraint rows.
    pub scaling: bool,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            feas_tol: 1e-6,
            opt_tol: 1e-6,
            max_iter: 500,
            mu_init: 0.1,
            bound_push: 1e-2,
            bound_frac: 1e-2,
            scaling: true,
        }
    }
}

/// Solves `prob` from its declared initial point (projected into the bounds).
pub fn solve(prob: &dyn NlpProblem, opts: &Options) -> Result<NlpResult, NlpError> {
    ipm::solve(prob, opts)
}
