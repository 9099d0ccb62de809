//! Pairwise-interaction Markov random field over one edge's indicator grid.
//!
//! For a fixed edge, the indicators across the locus x period grid get an
//! agreement prior: same-period cells in different loci are spatial
//! neighbors, same-locus cells whose integer period labels differ by one are
//! temporal neighbors. Missing cells carry no state and contribute no pair
//! terms.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::DatasetGrid;
use crate::util::{log_sum_exp, logistic};

/// Field parameters: sparsity offset and the two coupling strengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrfParams {
    pub eta1: f64,
    pub eta_s: f64,
    pub eta_t: f64,
}

/// Prior support of the couplings.
pub const ETA_RANGE: (f64, f64) = (0.0, 2.0);

impl MrfParams {
    pub fn new(eta1: f64, eta_s: f64, eta_t: f64) -> Result<Self> {
        let phi = MrfParams { eta1, eta_s, eta_t };
        if !phi.in_support() {
            return Err(Error::InvalidConfig(format!(
                "eta_s and eta_t must lie in [{}, {}], got ({eta_s}, {eta_t})",
                ETA_RANGE.0, ETA_RANGE.1
            )));
        }
        Ok(phi)
    }

    pub fn in_support(&self) -> bool {
        let (lo, hi) = ETA_RANGE;
        self.eta_s >= lo && self.eta_s <= hi && self.eta_t >= lo && self.eta_t <= hi
    }
}

/// Grid shape shared by all edges: which cells exist and how periods adjoin.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTopology {
    n_loci: usize,
    periods: Vec<i64>,
    present: Vec<bool>,
    present_cells: Vec<(usize, usize)>,
}

impl GridTopology {
    pub fn new(n_loci: usize, periods: Vec<i64>, present: Vec<bool>) -> Self {
        assert_eq!(present.len(), n_loci * periods.len());
        assert!(
            periods.windows(2).all(|w| w[0] < w[1]),
            "periods must increase"
        );
        let mut present_cells = Vec::new();
        for b in 0..n_loci {
            for t in 0..periods.len() {
                if present[b * periods.len() + t] {
                    present_cells.push((b, t));
                }
            }
        }
        GridTopology {
            n_loci,
            periods,
            present,
            present_cells,
        }
    }

    pub fn from_grid(grid: &DatasetGrid) -> Self {
        let n_loci = grid.n_loci();
        let periods = grid.periods().to_vec();
        let present = (0..n_loci)
            .flat_map(|b| (0..periods.len()).map(move |t| (b, t)))
            .map(|(b, t)| grid.cell(b, t).is_some())
            .collect();
        GridTopology::new(n_loci, periods, present)
    }

    /// All-present rectangular grid.
    pub fn full(n_loci: usize, periods: Vec<i64>) -> Self {
        let len = n_loci * periods.len();
        GridTopology::new(n_loci, periods, vec![true; len])
    }

    pub fn n_loci(&self) -> usize {
        self.n_loci
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    #[inline]
    pub fn is_present(&self, b: usize, t: usize) -> bool {
        self.present[b * self.periods.len() + t]
    }

    /// Present cells in locus-major order; this is also the raster order the
    /// joint sampler scans.
    pub fn present_cells(&self) -> &[(usize, usize)] {
        &self.present_cells
    }

    /// Period indices adjacent to `t` on the label scale (|label diff| = 1).
    pub fn temporal_neighbors(&self, t: usize) -> (Option<usize>, Option<usize>) {
        let prev = (t > 0 && self.periods[t - 1] == self.periods[t] - 1).then(|| t - 1);
        let next = (t + 1 < self.periods.len() && self.periods[t + 1] == self.periods[t] + 1)
            .then(|| t + 1);
        (prev, next)
    }
}

/// Indicator states of one edge across the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGammaGrid {
    topo: Arc<GridTopology>,
    states: Vec<u8>,
}

impl EdgeGammaGrid {
    pub fn new(topo: Arc<GridTopology>, states: Vec<u8>) -> Self {
        assert_eq!(states.len(), topo.n_loci() * topo.n_periods());
        EdgeGammaGrid { topo, states }
    }

    pub fn zeros(topo: Arc<GridTopology>) -> Self {
        let len = topo.n_loci() * topo.n_periods();
        EdgeGammaGrid {
            topo,
            states: vec![0; len],
        }
    }

    pub fn topology(&self) -> &Arc<GridTopology> {
        &self.topo
    }

    #[inline]
    pub fn get(&self, b: usize, t: usize) -> u8 {
        self.states[b * self.topo.n_periods() + t]
    }

    #[inline]
    pub fn set(&mut self, b: usize, t: usize, v: u8) {
        self.states[b * self.topo.n_periods() + t] = v;
    }

    /// States of present cells, in raster order.
    pub fn present_states(&self) -> Vec<u8> {
        self.topo
            .present_cells()
            .iter()
            .map(|&(b, t)| self.get(b, t))
            .collect()
    }
}

/// Conditional field of cell `(b, t)`: the log odds of its indicator given
/// the rest of the grid. Missing neighbors contribute nothing.
pub fn mrf_field(grid: &EdgeGammaGrid, b: usize, t: usize, phi: &MrfParams) -> f64 {
    let topo = grid.topology();
    debug_assert!(topo.is_present(b, t));
    let mut field = phi.eta1;
    for b2 in 0..topo.n_loci() {
        if b2 != b && topo.is_present(b2, t) {
            field += phi.eta_s * (2.0 * grid.get(b2, t) as f64 - 1.0);
        }
    }
    let (prev, next) = topo.temporal_neighbors(t);
    for t2 in [prev, next].into_iter().flatten() {
        if topo.is_present(b, t2) {
            field += phi.eta_t * (2.0 * grid.get(b, t2) as f64 - 1.0);
        }
    }
    field
}

/// `P(gamma_bt = 1 | rest)`, the logistic of the field.
pub fn mrf_conditional_prob(grid: &EdgeGammaGrid, b: usize, t: usize, phi: &MrfParams) -> f64 {
    logistic(mrf_field(grid, b, t, phi))
}

/// Log pseudolikelihood: sum over present cells of the log full-conditional
/// probability of the observed state.
pub fn pseudolikelihood_log(grid: &EdgeGammaGrid, phi: &MrfParams) -> f64 {
    let mut total = 0.0;
    for &(b, t) in grid.topology().present_cells() {
        let f = mrf_field(grid, b, t, phi);
        // log P(state | rest) without overflow
        total += if grid.get(b, t) == 1 {
            -(-f).exp().ln_1p()
        } else {
            -f.exp().ln_1p()
        };
    }
    total
}

type RankPairs = Vec<(usize, usize)>;

/// Unordered neighbor pairs among present cells, as present-rank indices.
fn neighbor_pairs(topo: &GridTopology) -> (RankPairs, RankPairs) {
    let cells = topo.present_cells();
    let rank_of = |b: usize, t: usize| cells.iter().position(|&c| c == (b, t));
    let mut spatial = Vec::new();
    let mut temporal = Vec::new();
    for (r1, &(b1, t1)) in cells.iter().enumerate() {
        for (r2, &(b2, t2)) in cells.iter().enumerate().skip(r1 + 1) {
            if t1 == t2 && b1 != b2 {
                spatial.push((r1, r2));
            }
        }
        let (_, next) = topo.temporal_neighbors(t1);
        if let Some(t2) = next {
            if topo.is_present(b1, t2) {
                temporal.push((r1, rank_of(b1, t2).expect("present")));
            }
        }
    }
    (spatial, temporal)
}

fn energy(
    states: &[u8],
    phi: &MrfParams,
    spatial: &[(usize, usize)],
    temporal: &[(usize, usize)],
) -> f64 {
    let ones: f64 = states.iter().map(|&s| s as f64).sum();
    let agree = |pairs: &[(usize, usize)]| -> f64 {
        pairs
            .iter()
            .filter(|&&(a, b)| states[a] == states[b])
            .count() as f64
    };
    phi.eta1 * ones + phi.eta_s * agree(spatial) + phi.eta_t * agree(temporal)
}

const EXACT_MRF_GUARD: usize = 20;

/// Normalized log probability of every configuration of the present cells,
/// indexed by the bitmask over present-cell ranks. Only feasible for tiny
/// grids.
pub fn exact_mrf_log_prob_table(topo: &GridTopology, phi: &MrfParams) -> Result<Vec<f64>> {
    let k = topo.present_cells().len();
    if k > EXACT_MRF_GUARD {
        return Err(Error::GuardExceeded {
            what: "MRF grid enumeration",
            size: k,
            limit: EXACT_MRF_GUARD,
        });
    }
    let (spatial, temporal) = neighbor_pairs(topo);
    let mut energies = Vec::with_capacity(1 << k);
    let mut states = vec![0u8; k];
    for mask in 0..(1usize << k) {
        for (r, s) in states.iter_mut().enumerate() {
            *s = ((mask >> r) & 1) as u8;
        }
        energies.push(energy(&states, phi, &spatial, &temporal));
    }
    let log_z = log_sum_exp(&energies);
    Ok(energies.into_iter().map(|e| e - log_z).collect())
}

/// Bitmask of a grid's present-cell states, in present-rank order.
pub fn state_mask(grid: &EdgeGammaGrid) -> usize {
    grid.present_states()
        .iter()
        .enumerate()
        .fold(0usize, |acc, (r, &s)| acc | ((s as usize) << r))
}

/// Exact normalized log probability of the grid's configuration, by
/// enumerating every configuration of the present cells.
pub fn exact_mrf_log_prob(grid: &EdgeGammaGrid, phi: &MrfParams) -> Result<f64> {
    let table = exact_mrf_log_prob_table(grid.topology(), phi)?;
    Ok(table[state_mask(grid)])
}

/// One Metropolis-Hastings sweep over the couplings: a Gaussian random-walk
/// proposal for eta_s, then one for eta_t. Proposals outside the prior box
/// are rejected outright; the target is the pseudolikelihood summed over all
/// edge grids. eta1 is never updated.
pub fn mh_update_eta<R: Rng>(
    edge_grids: &[EdgeGammaGrid],
    phi: &MrfParams,
    proposal_sd: f64,
    rng: &mut R,
) -> MrfParams {
    debug_assert!(phi.in_support());
    let total = |phi: &MrfParams| -> f64 {
        edge_grids
            .iter()
            .map(|g| pseudolikelihood_log(g, phi))
            .sum()
    };

    let mut current = *phi;
    let mut current_value = total(&current);
    for coupling in 0..2 {
        let step: f64 = StandardNormal.sample(rng);
        let mut candidate = current;
        let slot = if coupling == 0 {
            &mut candidate.eta_s
        } else {
            &mut candidate.eta_t
        };
        *slot += proposal_sd * step;
        if !candidate.in_support() {
            continue;
        }
        let candidate_value = total(&candidate);
        let log_ratio = candidate_value - current_value;
        if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
            current = candidate;
            current_value = candidate_value;
        }
    }
    current
}
