//! Joint Gibbs sampler over a locus x period grid of datasets.
//!
//! Coefficient and residual-scale updates are the single-graph updates run
//! per cell; the indicator update couples cells through the Markov-field
//! conditional; the coupling strengths get one Metropolis-Hastings sweep per
//! iteration. Every stochastic task draws from its own seeded substream, so
//! output is independent of the worker count.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{pair_count, pair_index, pairs};
use crate::hyper::Hyperparams;
use crate::model::{CellKey, DatasetGrid, ObservationMatrix};
use crate::mrf::{mh_update_eta, mrf_field, EdgeGammaGrid, GridTopology, MrfParams};
use crate::rng::{substream, Stream};
use crate::single::{
    build_shrinkage_diag, gamma_pos, sample_beta_row_with_noise, sample_sigma2, slab_spike_llr,
    standard_normal_vector, ChainMeta, CoefficientState, EdgeRule, GibbsSchedule, NodeDesign,
};
use crate::util::{logistic, par_map, try_par_map};

/// Edge-indicator states for the whole grid, stored per edge.
///
/// In symmetric mode there is one grid per unordered pair; otherwise one per
/// ordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStateArray {
    p: usize,
    symmetric: bool,
    topo: Arc<GridTopology>,
    grids: Vec<EdgeGammaGrid>,
}

fn ordered_index(p: usize, i: usize, j: usize) -> usize {
    i * (p - 1) + gamma_pos(i, j)
}

impl LatentStateArray {
    pub fn zeros(p: usize, symmetric: bool, topo: Arc<GridTopology>) -> Self {
        let count = if symmetric {
            pair_count(p)
        } else {
            p * (p - 1)
        };
        LatentStateArray {
            p,
            symmetric,
            topo: topo.clone(),
            grids: (0..count)
                .map(|_| EdgeGammaGrid::zeros(topo.clone()))
                .collect(),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn topology(&self) -> &Arc<GridTopology> {
        &self.topo
    }

    pub fn edge_grids(&self) -> &[EdgeGammaGrid] {
        &self.grids
    }

    /// Indicator for the directed entry (i, j) of cell (b, t).
    pub fn gamma(&self, b: usize, t: usize, i: usize, j: usize) -> u8 {
        let idx = if self.symmetric {
            let (a, c) = if i < j { (i, j) } else { (j, i) };
            pair_index(self.p, a, c)
        } else {
            ordered_index(self.p, i, j)
        };
        self.grids[idx].get(b, t)
    }

    /// Indicator row of node `i` in cell (b, t), skip-`i` ordering.
    pub fn row_gamma(&self, b: usize, t: usize, i: usize) -> Vec<u8> {
        (0..self.p)
            .filter(|&j| j != i)
            .map(|j| self.gamma(b, t, i, j))
            .collect()
    }
}

/// Scan order of the indicator raster within each edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RasterOrder {
    /// Loci outer, periods inner.
    #[default]
    LocusMajor,
    /// Periods outer, loci inner.
    PeriodMajor,
}

/// Options for a joint run.
#[derive(Debug, Clone)]
pub struct JointOptions {
    pub symmetric: bool,
    pub edge_rule: EdgeRule,
    /// Pin sigma^2 per present cell (raster order).
    pub fix_sigma: Option<Vec<Vec<f64>>>,
    pub seed: u64,
    pub eta1: f64,
    pub eta_s_init: f64,
    pub eta_t_init: f64,
    /// Skip the Metropolis-Hastings coupling updates.
    pub fix_eta: bool,
    pub proposal_sd: f64,
    pub raster: RasterOrder,
}

impl Default for JointOptions {
    fn default() -> Self {
        JointOptions {
            symmetric: true,
            edge_rule: EdgeRule::Or,
            fix_sigma: None,
            seed: 0,
            eta1: crate::hyper::DEFAULT_ETA1,
            eta_s_init: 1.0,
            eta_t_init: 1.0,
            fix_eta: false,
            proposal_sd: crate::hyper::DEFAULT_PROPOSAL_SD,
            raster: RasterOrder::LocusMajor,
        }
    }
}

/// Full sampler state: per-cell coefficients, the indicator array, and the
/// field parameters.
#[derive(Debug, Clone)]
pub struct JointState {
    pub cells: Vec<CoefficientState>,
    pub gamma: LatentStateArray,
    pub phi: MrfParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorStat {
    pub mean: f64,
    pub sd: f64,
}

/// Output of a joint run.
#[derive(Debug, Clone, PartialEq)]
pub struct JointChainSummary {
    /// Present cells in raster (locus-major) order.
    pub cells: Vec<CellKey>,
    /// Edge-score matrix per present cell, aligned with `cells`.
    pub edge_scores: Vec<DMatrix<f64>>,
    /// (eta_s, eta_t) after each sweep, including burn-in.
    pub eta_trace: Vec<(f64, f64)>,
    pub eta_s: PosteriorStat,
    pub eta_t: PosteriorStat,
    pub meta: ChainMeta,
}

/// One grid-coupled indicator update across all edges.
///
/// Each edge's grid is scanned in a fixed raster order; the conditional log
/// odds of a cell's indicator is the coefficient likelihood ratio (both
/// directions in symmetric mode) plus the Markov-field term. Draws are keyed
/// by `(seed, sweep, edge)`, so edges may be updated in parallel.
#[allow(clippy::too_many_arguments)]
pub fn sample_gamma_joint(
    cell_states: &[CoefficientState],
    hypers: &[Hyperparams],
    gamma: &mut LatentStateArray,
    phi: &MrfParams,
    scan: &[(usize, usize)],
    cell_rank: &(dyn Fn(usize, usize) -> usize + Sync),
    seed: u64,
    sweep: usize,
) {
    let p = gamma.p;
    let symmetric = gamma.symmetric;
    let directed: Vec<(usize, usize)> = if symmetric {
        pairs(p).collect()
    } else {
        (0..p)
            .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect()
    };

    let updated: Vec<EdgeGammaGrid> = {
        let grids = &gamma.grids;
        par_map(grids.len(), |k| {
            let (i, j) = directed[k];
            let mut grid = grids[k].clone();
            let mut rng = substream(seed, Stream::Gamma, &[sweep as u64, k as u64]);
            for &(b, t) in scan {
                let c = cell_rank(b, t);
                let mut lo = slab_spike_llr(cell_states[c].beta(i, j), &hypers[c], i);
                if symmetric {
                    lo += slab_spike_llr(cell_states[c].beta(j, i), &hypers[c], j);
                }
                lo += mrf_field(&grid, b, t, phi);
                let draw = (rng.random::<f64>() < logistic(lo)) as u8;
                grid.set(b, t, draw);
            }
            grid
        })
    };
    gamma.grids = updated;
}

/// Runs the joint Gibbs sampler on a prepared grid.
///
/// `hypers` must align with `grid.present_cells()` (see
/// [`crate::hyper::resolve_hyperparams`]).
pub fn gibbs_joint(
    data: &DatasetGrid,
    hypers: &[Hyperparams],
    schedule: GibbsSchedule,
    options: &JointOptions,
) -> Result<JointChainSummary> {
    schedule.validate()?;
    let present = data.present_cells();
    if present.is_empty() {
        return Err(Error::InvalidGrid("no present cells".into()));
    }
    if hypers.len() != present.len() {
        return Err(Error::InvalidConfig(
            "one hyperparameter set per present cell is required".into(),
        ));
    }
    let p = data.p().expect("present cell");
    if p < 2 {
        return Err(Error::InvalidGrid("need at least two variables".into()));
    }
    let phi0 = MrfParams::new(options.eta1, options.eta_s_init, options.eta_t_init)?;
    if !(options.proposal_sd > 0.0) {
        return Err(Error::InvalidConfig("proposal_sd must be positive".into()));
    }
    if let Some(fix) = &options.fix_sigma {
        if fix.len() != present.len()
            || fix
                .iter()
                .any(|v| v.len() != p || v.iter().any(|&s| !(s > 0.0)))
        {
            return Err(Error::InvalidConfig(
                "fix_sigma must hold p positive values per present cell".into(),
            ));
        }
    }

    let cells: Vec<&ObservationMatrix> = present
        .iter()
        .map(|&(b, t)| data.cell(b, t).expect("present"))
        .collect();
    for (c, x) in cells.iter().enumerate() {
        if !x.is_centered() {
            return Err(Error::InvalidGrid(format!(
                "cell {} is not centered; run DatasetGrid::prepared first",
                data.key(present[c].0, present[c].1)
            )));
        }
    }

    let topo = Arc::new(GridTopology::from_grid(data));
    let designs: Vec<NodeDesign> = cells.iter().map(|x| NodeDesign::new(x)).collect();
    let keys: Vec<CellKey> = present.iter().map(|&(b, t)| data.key(b, t)).collect();

    // rank lookup: (b, t) -> raster index among present cells
    let n_periods = data.n_periods();
    let mut rank = vec![usize::MAX; data.n_loci() * n_periods];
    for (c, &(b, t)) in present.iter().enumerate() {
        rank[b * n_periods + t] = c;
    }
    let rank_fn = move |b: usize, t: usize| rank[b * n_periods + t];

    let scan: Vec<(usize, usize)> = match options.raster {
        RasterOrder::LocusMajor => present.clone(),
        RasterOrder::PeriodMajor => {
            let mut s = present.clone();
            s.sort_by_key(|&(b, t)| (t, b));
            s
        }
    };

    let mut state = JointState {
        cells: (0..present.len())
            .map(|c| {
                let sigma2 = match &options.fix_sigma {
                    Some(fix) => fix[c].clone(),
                    None => (0..p).map(|i| cells[c].column_sd(i).powi(2)).collect(),
                };
                if sigma2.iter().any(|&s| !(s > 0.0)) {
                    return Err(Error::InvalidConfig(format!(
                        "cell {} has a zero-variance column",
                        keys[c]
                    )));
                }
                Ok(CoefficientState::zeros(p, sigma2))
            })
            .collect::<Result<Vec<_>>>()?,
        gamma: LatentStateArray::zeros(p, options.symmetric, topo.clone()),
        phi: phi0,
    };

    let n_cells = present.len();
    let mut score_acc: Vec<DMatrix<f64>> = vec![DMatrix::zeros(p, p); n_cells];
    let mut retained = 0usize;
    let mut eta_trace = Vec::with_capacity(schedule.iterations);
    let mut eta_samples: Vec<(f64, f64)> = Vec::with_capacity(schedule.retained_count());

    for sweep in 0..schedule.iterations {
        // coefficient rows, all cells at once
        let rows = try_par_map(n_cells * p, |k| {
            let c = k / p;
            let i = k % p;
            let (b, t) = present[c];
            let g_row = state.gamma.row_gamma(b, t, i);
            let d = build_shrinkage_diag(&g_row, state.cells[c].sigma2(i), &hypers[c], i);
            let (a, xty) = designs[c].system(i, &d);
            let mut rng = substream(
                options.seed,
                Stream::BetaRow,
                &[sweep as u64, c as u64, i as u64],
            );
            let z = standard_normal_vector(p - 1, &mut rng);
            sample_beta_row_with_noise(a, &xty, state.cells[c].sigma2(i).sqrt(), &z, i)
                .map_err(|e| e.in_sweep(sweep, Some(keys[c].to_string())))
        })?;
        for (k, row) in rows.into_iter().enumerate() {
            state.cells[k / p].rows[k % p] = row;
        }

        if options.fix_sigma.is_none() {
            let sigma2 = try_par_map(n_cells * p, |k| {
                let c = k / p;
                let i = k % p;
                let mut rng = substream(
                    options.seed,
                    Stream::Sigma,
                    &[sweep as u64, c as u64, i as u64],
                );
                sample_sigma2(cells[c], i, state.cells[c].row(i), &hypers[c], &mut rng)
                    .map_err(|e| e.in_sweep(sweep, Some(keys[c].to_string())))
            })?;
            for (k, s) in sigma2.into_iter().enumerate() {
                state.cells[k / p].sigma2[k % p] = s;
            }
        }

        sample_gamma_joint(
            &state.cells,
            hypers,
            &mut state.gamma,
            &state.phi,
            &scan,
            &rank_fn,
            options.seed,
            sweep,
        );

        if !options.fix_eta {
            let mut rng = substream(options.seed, Stream::Eta, &[sweep as u64]);
            state.phi = mh_update_eta(
                state.gamma.edge_grids(),
                &state.phi,
                options.proposal_sd,
                &mut rng,
            );
        }
        eta_trace.push((state.phi.eta_s, state.phi.eta_t));

        if schedule.retains(sweep) {
            retained += 1;
            eta_samples.push((state.phi.eta_s, state.phi.eta_t));
            for (c, &(b, t)) in present.iter().enumerate() {
                for (i, j) in pairs(p) {
                    let v = if options.symmetric {
                        state.gamma.gamma(b, t, i, j)
                    } else {
                        match options.edge_rule {
                            EdgeRule::Or => {
                                state.gamma.gamma(b, t, i, j) | state.gamma.gamma(b, t, j, i)
                            }
                            EdgeRule::And => {
                                state.gamma.gamma(b, t, i, j) & state.gamma.gamma(b, t, j, i)
                            }
                        }
                    } as f64;
                    score_acc[c][(i, j)] += v;
                    score_acc[c][(j, i)] += v;
                }
            }
        }
    }

    let edge_scores = score_acc
        .into_iter()
        .map(|acc| acc / retained as f64)
        .collect();
    let stat = |values: &[f64]| {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        PosteriorStat {
            mean,
            sd: var.sqrt(),
        }
    };
    let s_vals: Vec<f64> = eta_samples.iter().map(|&(s, _)| s).collect();
    let t_vals: Vec<f64> = eta_samples.iter().map(|&(_, t)| t).collect();

    Ok(JointChainSummary {
        cells: keys,
        edge_scores,
        eta_trace,
        eta_s: stat(&s_vals),
        eta_t: stat(&t_vals),
        meta: ChainMeta {
            iterations: schedule.iterations,
            burn_in: schedule.burn_in,
            thin: schedule.thin,
            seed: options.seed,
            symmetric: options.symmetric,
        },
    })
}
