//! Error types shared across the solver.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: mismatched lattice steps, unattainable
    /// truncation tolerances, malformed quadrature rules, bad scheme
    /// parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Problem data failed to evaluate or violates a declared bound.
    #[error("data error: {0}")]
    Data(String),

    /// Kernel-level failure: non-integrable tail, diverging mass estimate,
    /// unrepairable loss of weight convexity.
    #[error("kernel error: {0}")]
    Kernel(String),

    /// A stencil lost positivity; names the offending node and the source.
    #[error("monotonicity violated at node {node:?}: {detail}")]
    Monotonicity { node: Vec<f64>, detail: String },

    /// Fixed-point iteration exhausted its budget. `residual_tail` holds the
    /// most recent sup-norm residuals for post-mortem inspection.
    #[error("fixed point did not converge after {iterations} iterations (last residuals {residual_tail:?})")]
    Convergence {
        iterations: usize,
        residual_tail: Vec<f64>,
    },

    /// Time-step gate failed with `CflMode::Enforce`.
    #[error("CFL violation: {0}")]
    Step(String),

    /// Adaptive quadrature could not reach the requested tolerance.
    #[error("quadrature error: {0}")]
    Quadrature(String),

    /// The reference integrator could not certify the requested tolerance.
    /// Dependent tests must treat this as inconclusive, never as a pass.
    #[error("oracle error: {0}")]
    Oracle(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
    pub fn kernel(msg: impl Into<String>) -> Self {
        Error::Kernel(msg.into())
    }
}
