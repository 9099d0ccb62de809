//! Prior hyperparameters and their resolution from data and user config.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DatasetGrid, ObservationMatrix};

/// Resolved hyperparameters for one observation matrix.
///
/// `tau1[i]` is the slab scale for coefficients in the regression of node `i`,
/// `tau0[i] = delta * tau1[i]` the spike scale. The inverse-gamma prior on
/// sigma^2 is kept in the flat regime (`nu = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub q: f64,
    pub delta: f64,
    pub l: f64,
    pub tau1: Vec<f64>,
    pub tau0: Vec<f64>,
    pub eta1: f64,
    pub nu: f64,
    pub lambda: f64,
}

impl Hyperparams {
    /// Builds and checks a parameter set from explicit scales.
    pub fn new(q: f64, delta: f64, l: f64, tau1: Vec<f64>, eta1: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidConfig(format!("q must be in (0,1), got {q}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must be in (0,1), got {delta}"
            )));
        }
        if !(l > 0.0) {
            return Err(Error::InvalidConfig(format!("l must be positive, got {l}")));
        }
        if tau1.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::InvalidConfig(
                "every tau1 entry must be positive (constant column?)".into(),
            ));
        }
        let tau0 = tau1.iter().map(|&t| delta * t).collect();
        Ok(Hyperparams {
            q,
            delta,
            l,
            tau1,
            tau0,
            eta1,
            nu: 0.0,
            lambda: 0.0,
        })
    }

    pub fn p(&self) -> usize {
        self.tau1.len()
    }
}

/// User-facing configuration. Any field left `None` takes its default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    /// Prior edge probability (single-graph Bernoulli mode only).
    pub q: Option<f64>,
    /// Spike/slab scale ratio.
    pub delta: Option<f64>,
    /// Slab scale multiplier. When unset, 0.1 for n >= p and 0.1 n/p for
    /// n < p, resolved against each cell's own row count. An explicit value
    /// is used verbatim.
    pub l: Option<f64>,
    /// Markov-field sparsity offset (joint mode's analogue of q).
    pub eta1: Option<f64>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub seed: Option<u64>,
    /// Mirror gamma across the diagonal (default true).
    pub symmetric: Option<bool>,
    /// Pin sigma^2 to these values (per node), e.g. for oracle comparisons.
    pub fix_sigma: Option<Vec<f64>>,
    /// Initial spatial/temporal coupling values.
    pub eta_s: Option<f64>,
    pub eta_t: Option<f64>,
    /// Skip Metropolis-Hastings updates of the couplings.
    pub fix_eta: Option<bool>,
    /// Random-walk proposal standard deviation for the couplings.
    pub proposal_sd: Option<f64>,
    /// Edge rule for unconstrained mode: "or" (default) or "and".
    pub edge_rule: Option<String>,
}

pub const DEFAULT_Q: f64 = 0.1;
pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_L: f64 = 0.1;
pub const DEFAULT_ETA1: f64 = -0.5;
pub const DEFAULT_ITERATIONS: usize = 5_000;
pub const DEFAULT_BURN_IN: usize = 2_000;
pub const DEFAULT_THIN: usize = 1;
pub const DEFAULT_PROPOSAL_SD: f64 = 0.1;

impl UserConfig {
    pub fn iterations(&self) -> usize {
        self.iterations.unwrap_or(DEFAULT_ITERATIONS)
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(DEFAULT_BURN_IN)
    }

    pub fn thin(&self) -> usize {
        self.thin.unwrap_or(DEFAULT_THIN).max(1)
    }

    pub fn symmetric(&self) -> bool {
        self.symmetric.unwrap_or(true)
    }

    pub fn eta1(&self) -> f64 {
        self.eta1.unwrap_or(DEFAULT_ETA1)
    }
}

/// Resolves hyperparameters for one cell: `tau1[i] = l * sd(column i)` with
/// the small-sample adjustment `l = 0.1 n / p` when `n < p` and no explicit
/// `l` is given.
pub fn resolve_hyperparams_cell(x: &ObservationMatrix, config: &UserConfig) -> Result<Hyperparams> {
    let n = x.n();
    let p = x.p();
    let q = config.q.unwrap_or(DEFAULT_Q);
    let delta = config.delta.unwrap_or(DEFAULT_DELTA);
    let l = match config.l {
        Some(l) => l,
        None if n < p => DEFAULT_L * n as f64 / p as f64,
        None => DEFAULT_L,
    };
    let tau1: Vec<f64> = (0..p).map(|i| l * x.column_sd(i)).collect();
    Hyperparams::new(q, delta, l, tau1, config.eta1())
}

/// Resolves hyperparameters for every present cell of a grid, in
/// `present_cells` order. For a degenerate 1x1 grid this is the single-graph
/// resolution.
pub fn resolve_hyperparams(grid: &DatasetGrid, config: &UserConfig) -> Result<Vec<Hyperparams>> {
    grid.present_cells()
        .into_iter()
        .map(|(b, t)| resolve_hyperparams_cell(grid.cell(b, t).expect("present cell"), config))
        .collect()
}
