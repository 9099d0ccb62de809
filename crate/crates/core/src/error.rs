//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by samplers, generators and estimators.
#[derive(Debug, Error)]
pub enum Error {
    /// The Gram-plus-shrinkage matrix was numerically indefinite even after
    /// one jitter retry. Usually signals mis-scaled hyperparameters.
    #[error("cholesky factorization failed for node {node}")]
    CholeskyFailure { node: usize },

    /// Residual sum of squares collapsed to zero (perfect fit); the
    /// inverse-gamma draw for sigma^2 is undefined.
    #[error("degenerate residual (RSS = 0) for node {node}")]
    DegenerateResidual { node: usize },

    /// An exact-enumeration oracle was asked for more configurations than
    /// its guard allows.
    #[error("enumeration guard exceeded: {what} ({size} > {limit})")]
    GuardExceeded {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    /// Graph perturbation cannot add back as many edges as it removed.
    #[error(
        "infeasible perturbation: need {needed} replacement edges, only {available} non-edges"
    )]
    InfeasiblePerturbation { needed: usize, available: usize },

    /// The constrained-MLE refit did not reach the requested tolerance.
    #[error(
        "precision refit did not converge within {max_iter} iterations (residual {residual:.3e})"
    )]
    NonConvergence { max_iter: usize, residual: f64 },

    /// A covariance sub-block required by the refit is not positive definite.
    #[error("singular covariance block at node {node}")]
    SingularCovariance { node: usize },

    /// A configuration value is outside its domain.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The dataset grid violates a structural invariant.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// An error raised while sweeping a chain, with iteration context.
    #[error("sweep {sweep}{}: {source}", .cell.as_deref().map(|c| format!(" in cell {c}")).unwrap_or_default())]
    Sweep {
        sweep: usize,
        cell: Option<String>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps an error with the sweep index (and optionally the grid cell)
    /// where it occurred.
    pub fn in_sweep(self, sweep: usize, cell: Option<String>) -> Error {
        Error::Sweep {
            sweep,
            cell,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
