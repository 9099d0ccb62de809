//! Blocked Gibbs sampler for a single graph.
//!
//! One sweep updates, in order: every coefficient row (jointly, from its
//! multivariate normal full conditional), every residual scale, then the edge
//! indicators. The coefficient draw avoids explicit matrix inversion: with
//! `A = X'X + D = L L'`, the draw is `L'^-1 (L^-1 X'x_i + sigma z)`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{pair_count, pairs};
use crate::hyper::Hyperparams;
use crate::model::ObservationMatrix;
use crate::rng::{substream, Stream};
use crate::util::{logistic, try_par_map};

/// Regression coefficients and residual scales for all `p` node regressions.
///
/// `rows[i]` holds the coefficients of node `i` on the other nodes, in
/// ascending node order with `i` skipped. `sigma2[i]` is the residual
/// variance of that regression and must stay positive.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientState {
    pub(crate) rows: Vec<DVector<f64>>,
    pub(crate) sigma2: Vec<f64>,
}

impl CoefficientState {
    pub fn zeros(p: usize, sigma2: Vec<f64>) -> Self {
        assert_eq!(sigma2.len(), p);
        assert!(sigma2.iter().all(|&s| s > 0.0), "sigma2 must be positive");
        CoefficientState {
            rows: (0..p).map(|_| DVector::zeros(p - 1)).collect(),
            sigma2,
        }
    }

    pub fn p(&self) -> usize {
        self.rows.len()
    }

    /// Coefficient of node `j` in the regression of node `i` (`i != j`).
    pub fn beta(&self, i: usize, j: usize) -> f64 {
        self.rows[i][gamma_pos(i, j)]
    }

    pub fn row(&self, i: usize) -> &DVector<f64> {
        &self.rows[i]
    }

    pub fn sigma2(&self, i: usize) -> f64 {
        self.sigma2[i]
    }

    pub fn sigma2_slice(&self) -> &[f64] {
        &self.sigma2
    }
}

/// Position of node `j` within the row ordering of node `i`.
#[inline]
pub fn gamma_pos(i: usize, j: usize) -> usize {
    debug_assert_ne!(i, j);
    if j < i {
        j
    } else {
        j - 1
    }
}

/// Binary edge-indicator matrix; the diagonal is never read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GammaMatrix {
    p: usize,
    data: Vec<u8>,
}

impl GammaMatrix {
    pub fn zeros(p: usize) -> Self {
        GammaMatrix {
            p,
            data: vec![0; p * p],
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[i * self.p + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: u8) {
        self.data[i * self.p + j] = v;
    }

    /// Row `i` in the skip-`i` ordering used by the coefficient prior.
    pub fn row_gamma(&self, i: usize) -> Vec<u8> {
        (0..self.p)
            .filter(|&j| j != i)
            .map(|j| self.get(i, j))
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        pairs(self.p).all(|(i, j)| self.get(i, j) == self.get(j, i))
    }
}

/// Iteration counts for one Gibbs run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GibbsSchedule {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl GibbsSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::InvalidConfig(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be >= 1".into()));
        }
        Ok(())
    }

    /// Whether the sweep index is retained for summaries.
    #[inline]
    pub fn retains(&self, sweep: usize) -> bool {
        sweep >= self.burn_in && (sweep - self.burn_in).is_multiple_of(self.thin)
    }

    pub fn retained_count(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

/// How an unordered edge score is formed from the two directed indicators
/// when no symmetry constraint is imposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeRule {
    #[default]
    Or,
    And,
}

/// Options for a single-graph run.
#[derive(Debug, Clone)]
pub struct SingleOptions {
    pub symmetric: bool,
    pub edge_rule: EdgeRule,
    /// Pin sigma^2 to these values instead of sampling them.
    pub fix_sigma: Option<Vec<f64>>,
    pub seed: u64,
    pub retain_traces: bool,
}

impl Default for SingleOptions {
    fn default() -> Self {
        SingleOptions {
            symmetric: true,
            edge_rule: EdgeRule::Or,
            fix_sigma: None,
            seed: 0,
            retain_traces: false,
        }
    }
}

/// Retained draws, when requested.
#[derive(Debug, Clone, PartialEq)]
pub struct Traces {
    /// Upper-triangle indicator bits per retained sweep, in pair-index order.
    pub gamma: Vec<Vec<u8>>,
    /// Residual variances per retained sweep.
    pub sigma2: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainMeta {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub symmetric: bool,
}

/// Per-edge marginal posterior means plus run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    pub edge_score: DMatrix<f64>,
    pub traces: Option<Traces>,
    pub meta: ChainMeta,
}

/// Diagonal of the prior shrinkage matrix for the regression of node `i`:
/// `sigma_i^2 / tau_i1^2` where the indicator is on, `sigma_i^2 / tau_i0^2`
/// where it is off.
pub fn build_shrinkage_diag(
    gamma_row: &[u8],
    sigma2_i: f64,
    hyper: &Hyperparams,
    i: usize,
) -> DVector<f64> {
    assert!(sigma2_i > 0.0, "sigma2 must be positive");
    let t1 = hyper.tau1[i] * hyper.tau1[i];
    let t0 = hyper.tau0[i] * hyper.tau0[i];
    DVector::from_iterator(
        gamma_row.len(),
        gamma_row
            .iter()
            .map(|&g| if g == 1 { sigma2_i / t1 } else { sigma2_i / t0 }),
    )
}

/// One multivariate-normal coefficient draw given the Cholesky inputs and a
/// standard-normal noise vector. Exposed so tests can compare this
/// factorized path against a dense-inverse computation with identical noise.
pub fn sample_beta_row_with_noise(
    gram_plus_d: DMatrix<f64>,
    xty: &DVector<f64>,
    sigma_i: f64,
    z: &DVector<f64>,
    node: usize,
) -> Result<DVector<f64>> {
    let m = gram_plus_d.nrows();
    let chol = match Cholesky::new(gram_plus_d.clone()) {
        Some(c) => c,
        None => {
            // One retry with diagonal jitter masks rounding-level
            // indefiniteness only.
            let jitter = 1e-8 * gram_plus_d.trace() / m as f64;
            let mut jittered = gram_plus_d;
            for k in 0..m {
                jittered[(k, k)] += jitter;
            }
            Cholesky::new(jittered).ok_or(Error::CholeskyFailure { node })?
        }
    };
    let l = chol.l();
    let u = l
        .solve_lower_triangular(xty)
        .ok_or(Error::CholeskyFailure { node })?;
    let rhs = u + z * sigma_i;
    l.tr_solve_lower_triangular(&rhs)
        .ok_or(Error::CholeskyFailure { node })
}

/// Draws the coefficient row of node `i` from its full conditional
/// `N((X'X + D)^-1 X'x_i, sigma_i^2 (X'X + D)^-1)`.
pub fn sample_beta_row<R: Rng>(
    x: &ObservationMatrix,
    i: usize,
    d: &DVector<f64>,
    sigma2_i: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let p = x.p();
    let m = p - 1;
    let xv = x.values();
    let others: Vec<usize> = (0..p).filter(|&j| j != i).collect();
    let mut gram = DMatrix::zeros(m, m);
    let mut xty = DVector::zeros(m);
    for (a, &ja) in others.iter().enumerate() {
        xty[a] = xv.column(ja).dot(&xv.column(i));
        for (b, &jb) in others.iter().enumerate().skip(a) {
            let v = xv.column(ja).dot(&xv.column(jb));
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
        gram[(a, a)] += d[a];
    }
    let z = standard_normal_vector(m, rng);
    sample_beta_row_with_noise(gram, &xty, sigma2_i.sqrt(), &z, i)
}

pub(crate) fn standard_normal_vector<R: Rng>(len: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| StandardNormal.sample(rng)))
}

/// Draws sigma_i^2 from its inverse-gamma full conditional
/// `IG((nu + n)/2, (lambda nu + RSS)/2)`; with the flat prior (`nu = 0`)
/// this is `IG(n/2, RSS/2)`.
pub fn sample_sigma2<R: Rng>(
    x: &ObservationMatrix,
    i: usize,
    beta_row: &DVector<f64>,
    hyper: &Hyperparams,
    rng: &mut R,
) -> Result<f64> {
    let xv = x.values();
    let mut resid = xv.column(i).clone_owned();
    for (pos, j) in (0..x.p()).filter(|&j| j != i).enumerate() {
        resid.axpy(-beta_row[pos], &xv.column(j), 1.0);
    }
    let rss = resid.norm_squared();
    draw_inverse_gamma(x.n(), rss, hyper, i, rng)
}

fn draw_inverse_gamma<R: Rng>(
    n: usize,
    rss: f64,
    hyper: &Hyperparams,
    node: usize,
    rng: &mut R,
) -> Result<f64> {
    if !(rss > 0.0) || !rss.is_finite() {
        return Err(Error::DegenerateResidual { node });
    }
    let shape = (hyper.nu + n as f64) / 2.0;
    let scale_param = (hyper.lambda * hyper.nu + rss) / 2.0;
    // IG(a, b) by inverting Gamma(shape a, rate b)
    let gamma = Gamma::new(shape, 1.0 / scale_param)
        .map_err(|e| Error::InvalidConfig(format!("gamma draw: {e}")))?;
    Ok(1.0 / gamma.sample(rng))
}

/// Log-likelihood ratio of slab over spike for one coefficient of row `i`.
#[inline]
pub(crate) fn slab_spike_llr(beta: f64, hyper: &Hyperparams, i: usize) -> f64 {
    let t1 = hyper.tau1[i];
    let t0 = hyper.tau0[i];
    (t0 / t1).ln() + 0.5 * beta * beta * (1.0 / (t0 * t0) - 1.0 / (t1 * t1))
}

/// Conditional log odds of one directed indicator:
/// `log[q phi(beta; 0, tau_i1^2)] - log[(1-q) phi(beta; 0, tau_i0^2)]`.
pub fn gamma_log_odds_single(beta_ij: f64, hyper: &Hyperparams, i: usize) -> f64 {
    slab_spike_llr(beta_ij, hyper, i) + (hyper.q / (1.0 - hyper.q)).ln()
}

/// Conditional log odds of one unordered pair under the symmetry constraint:
/// both coefficient likelihood ratios plus a single prior term.
pub fn gamma_log_odds_pair(
    beta_ij: f64,
    beta_ji: f64,
    hyper: &Hyperparams,
    i: usize,
    j: usize,
) -> f64 {
    slab_spike_llr(beta_ij, hyper, i)
        + slab_spike_llr(beta_ji, hyper, j)
        + (hyper.q / (1.0 - hyper.q)).ln()
}

/// Draws the full indicator matrix given the coefficients. In symmetric mode
/// each unordered pair is drawn once and mirrored; otherwise every directed
/// indicator is drawn independently.
pub fn sample_gamma_single<R: Rng>(
    state: &CoefficientState,
    hyper: &Hyperparams,
    symmetric: bool,
    rng: &mut R,
) -> GammaMatrix {
    let p = state.p();
    let mut gamma = GammaMatrix::zeros(p);
    if symmetric {
        for (i, j) in pairs(p) {
            let lo = gamma_log_odds_pair(state.beta(i, j), state.beta(j, i), hyper, i, j);
            let draw = (rng.random::<f64>() < logistic(lo)) as u8;
            gamma.set(i, j, draw);
            gamma.set(j, i, draw);
        }
    } else {
        for i in 0..p {
            for j in 0..p {
                if i == j {
                    continue;
                }
                let lo = gamma_log_odds_single(state.beta(i, j), hyper, i);
                gamma.set(i, j, (rng.random::<f64>() < logistic(lo)) as u8);
            }
        }
    }
    gamma
}

/// Precomputed per-dataset quantities reused across sweeps.
pub(crate) struct NodeDesign {
    pub xtx: DMatrix<f64>,
}

impl NodeDesign {
    pub fn new(x: &ObservationMatrix) -> Self {
        let xv = x.values();
        NodeDesign { xtx: xv.tr_mul(xv) }
    }

    /// Gram sub-block for node `i` with the shrinkage diagonal added, plus
    /// the cross-products X_sub' x_i.
    pub fn system(&self, i: usize, d: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let p = self.xtx.nrows();
        let m = p - 1;
        let mut a = DMatrix::zeros(m, m);
        let mut xty = DVector::zeros(m);
        let mut row_map = Vec::with_capacity(m);
        for j in 0..p {
            if j != i {
                row_map.push(j);
            }
        }
        for (bi, &jb) in row_map.iter().enumerate() {
            xty[bi] = self.xtx[(jb, i)];
            for (ci, &jc) in row_map.iter().enumerate() {
                a[(bi, ci)] = self.xtx[(jb, jc)];
            }
            a[(bi, bi)] += d[bi];
        }
        (a, xty)
    }
}

/// Runs the blocked Gibbs sampler on one centered observation matrix.
///
/// Sweep order is coefficients, residual scales, indicators. Edge scores are
/// the across-sweep means of the retained indicator draws; in unconstrained
/// mode the two directed indicators are combined with `options.edge_rule`.
pub fn gibbs_single(
    x: &ObservationMatrix,
    hyper: &Hyperparams,
    schedule: GibbsSchedule,
    options: &SingleOptions,
) -> Result<ChainSummary> {
    schedule.validate()?;
    let p = x.p();
    if p < 2 {
        return Err(Error::InvalidGrid("need at least two variables".into()));
    }
    if hyper.p() != p {
        return Err(Error::InvalidConfig(
            "hyperparameter dimension does not match data".into(),
        ));
    }
    if !x.is_centered() {
        return Err(Error::InvalidGrid(
            "observation matrix is not centered; run center_columns first".into(),
        ));
    }
    if let Some(fixed) = &options.fix_sigma {
        if fixed.len() != p || fixed.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidConfig(
                "fix_sigma must hold p positive values".into(),
            ));
        }
    }

    let design = NodeDesign::new(x);
    let init_sigma2 = match &options.fix_sigma {
        Some(fixed) => fixed.clone(),
        None => (0..p).map(|i| x.column_sd(i).powi(2)).collect(),
    };
    if init_sigma2.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidConfig(
            "a column has zero variance; cannot initialize sigma^2".into(),
        ));
    }
    let mut state = CoefficientState::zeros(p, init_sigma2);
    let mut gamma = GammaMatrix::zeros(p);

    let mut score_acc = DMatrix::zeros(p, p);
    let mut retained = 0usize;
    let mut traces = options.retain_traces.then(|| Traces {
        gamma: Vec::with_capacity(schedule.retained_count()),
        sigma2: Vec::with_capacity(schedule.retained_count()),
    });

    for sweep in 0..schedule.iterations {
        run_sweep(&design, x, hyper, options, sweep, 0, &mut state, &mut gamma)
            .map_err(|e| e.in_sweep(sweep, None))?;

        if schedule.retains(sweep) {
            retained += 1;
            accumulate_scores(&mut score_acc, &gamma, options.symmetric, options.edge_rule);
            if let Some(tr) = traces.as_mut() {
                tr.gamma.push(upper_bits(&gamma));
                tr.sigma2.push(state.sigma2.clone());
            }
        }
    }

    let edge_score = score_acc / retained as f64;
    Ok(ChainSummary {
        edge_score,
        traces,
        meta: ChainMeta {
            iterations: schedule.iterations,
            burn_in: schedule.burn_in,
            thin: schedule.thin,
            seed: options.seed,
            symmetric: options.symmetric,
        },
    })
}

/// One full sweep; shared by the single-graph and joint samplers
/// (`cell` = present-cell rank; 0 for single graphs).
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_sweep(
    design: &NodeDesign,
    x: &ObservationMatrix,
    hyper: &Hyperparams,
    options: &SingleOptions,
    sweep: usize,
    cell: usize,
    state: &mut CoefficientState,
    gamma: &mut GammaMatrix,
) -> Result<()> {
    update_beta(design, hyper, options.seed, sweep, cell, gamma, state)?;
    if options.fix_sigma.is_none() {
        update_sigma2(x, hyper, options.seed, sweep, cell, state)?;
    }
    let mut rng = substream(options.seed, Stream::Gamma, &[sweep as u64, cell as u64]);
    *gamma = sample_gamma_single(state, hyper, options.symmetric, &mut rng);
    Ok(())
}

pub(crate) fn update_beta(
    design: &NodeDesign,
    hyper: &Hyperparams,
    seed: u64,
    sweep: usize,
    cell: usize,
    gamma: &GammaMatrix,
    state: &mut CoefficientState,
) -> Result<()> {
    let p = state.p();
    let rows = try_par_map(p, |i| {
        let d = build_shrinkage_diag(&gamma.row_gamma(i), state.sigma2[i], hyper, i);
        let (a, xty) = design.system(i, &d);
        let mut rng = substream(
            seed,
            Stream::BetaRow,
            &[sweep as u64, cell as u64, i as u64],
        );
        let z = standard_normal_vector(p - 1, &mut rng);
        sample_beta_row_with_noise(a, &xty, state.sigma2[i].sqrt(), &z, i)
    })?;
    state.rows = rows;
    Ok(())
}

pub(crate) fn update_sigma2(
    x: &ObservationMatrix,
    hyper: &Hyperparams,
    seed: u64,
    sweep: usize,
    cell: usize,
    state: &mut CoefficientState,
) -> Result<()> {
    let p = state.p();
    let sigma2 = try_par_map(p, |i| {
        let mut rng = substream(seed, Stream::Sigma, &[sweep as u64, cell as u64, i as u64]);
        sample_sigma2(x, i, &state.rows[i], hyper, &mut rng)
    })?;
    state.sigma2 = sigma2;
    Ok(())
}

pub(crate) fn accumulate_scores(
    acc: &mut DMatrix<f64>,
    gamma: &GammaMatrix,
    symmetric: bool,
    rule: EdgeRule,
) {
    let p = gamma.p();
    for (i, j) in pairs(p) {
        let v = if symmetric {
            gamma.get(i, j)
        } else {
            match rule {
                EdgeRule::Or => gamma.get(i, j) | gamma.get(j, i),
                EdgeRule::And => gamma.get(i, j) & gamma.get(j, i),
            }
        } as f64;
        acc[(i, j)] += v;
        acc[(j, i)] += v;
    }
}

pub(crate) fn upper_bits(gamma: &GammaMatrix) -> Vec<u8> {
    let p = gamma.p();
    let mut bits = Vec::with_capacity(pair_count(p));
    for (i, j) in pairs(p) {
        bits.push(gamma.get(i, j));
    }
    bits
}
