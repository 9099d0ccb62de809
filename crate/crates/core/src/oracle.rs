//! Exact brute-force posteriors for tiny instances.
//!
//! These enumerations integrate the coefficients analytically and condition
//! on fixed residual scales, giving a ground truth the samplers can be
//! checked against at desk scale. Everything works in log space with
//! log-sum-exp normalization.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{pair_count, pair_index, pairs, Adjacency};
use crate::hyper::Hyperparams;
use crate::model::{DatasetGrid, ObservationMatrix};
use crate::mrf::{exact_mrf_log_prob_table, GridTopology, MrfParams};
use crate::single::gamma_pos;
use crate::util::log_sum_exp;

const LN_2PI: f64 = 1.8378770664093453;

/// Log density of `N(y; 0, sigma2 I + U diag(taus2) U')` evaluated through
/// the Woodbury identity; only `m x m` systems are factored.
pub fn log_marginal_gaussian(
    n: usize,
    yty: f64,
    gram: &DMatrix<f64>,
    xty: &DVector<f64>,
    taus2: &[f64],
    sigma2: f64,
) -> f64 {
    let m = taus2.len();
    if m == 0 {
        return -0.5 * n as f64 * (LN_2PI + sigma2.ln()) - 0.5 * yty / sigma2;
    }
    debug_assert_eq!(gram.nrows(), m);
    let mut inner = gram.clone();
    for k in 0..m {
        inner[(k, k)] += sigma2 / taus2[k];
    }
    let chol = Cholesky::new(inner).expect("shrunk Gram matrix must be SPD");
    let logdet_c = (n - m) as f64 * sigma2.ln()
        + taus2.iter().map(|t| t.ln()).sum::<f64>()
        + chol.ln_determinant();
    let solved = chol.solve(xty);
    let quad = (yty - xty.dot(&solved)) / sigma2;
    -0.5 * (n as f64 * LN_2PI + logdet_c + quad)
}

/// Same density through the explicit `n x n` covariance; the slow route kept
/// as an independent check on the Woodbury computation.
pub fn log_marginal_gaussian_cov(
    y: &DVector<f64>,
    u: &DMatrix<f64>,
    taus2: &[f64],
    sigma2: f64,
) -> f64 {
    let n = y.len();
    let mut c = DMatrix::from_diagonal_element(n, n, sigma2);
    for (k, &t2) in taus2.iter().enumerate() {
        let col = u.column(k);
        for a in 0..n {
            for b in 0..n {
                c[(a, b)] += t2 * col[a] * col[b];
            }
        }
    }
    let chol = Cholesky::new(c).expect("covariance must be SPD");
    let quad = y.dot(&chol.solve(y));
    -0.5 * (n as f64 * LN_2PI + chol.ln_determinant() + quad)
}

/// Per-node sufficient statistics for the marginal likelihood.
struct NodeStats {
    n: usize,
    yty: f64,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
}

impl NodeStats {
    fn new(x: &ObservationMatrix, i: usize) -> Self {
        let xv = x.values();
        let p = x.p();
        let others: Vec<usize> = (0..p).filter(|&j| j != i).collect();
        let m = others.len();
        let mut gram = DMatrix::zeros(m, m);
        let mut xty = DVector::zeros(m);
        for (a, &ja) in others.iter().enumerate() {
            xty[a] = xv.column(ja).dot(&xv.column(i));
            for (b, &jb) in others.iter().enumerate().skip(a) {
                let v = xv.column(ja).dot(&xv.column(jb));
                gram[(a, b)] = v;
                gram[(b, a)] = v;
            }
        }
        NodeStats {
            n: x.n(),
            yty: xv.column(i).norm_squared(),
            gram,
            xty,
        }
    }

    /// Log marginal likelihood of node `i`'s column for one neighborhood
    /// mask (bit `pos` set means the slab scale applies to that column).
    fn log_marginal(&self, mask: usize, hyper: &Hyperparams, i: usize, sigma2: f64) -> f64 {
        let m = self.xty.len();
        let taus2: Vec<f64> = (0..m)
            .map(|pos| {
                if (mask >> pos) & 1 == 1 {
                    hyper.tau1[i] * hyper.tau1[i]
                } else {
                    hyper.tau0[i] * hyper.tau0[i]
                }
            })
            .collect();
        log_marginal_gaussian(self.n, self.yty, &self.gram, &self.xty, &taus2, sigma2)
    }

    /// All `2^(p-1)` marginal likelihoods for this node.
    fn table(&self, hyper: &Hyperparams, i: usize, sigma2: f64) -> Vec<f64> {
        (0..(1usize << self.xty.len()))
            .map(|mask| self.log_marginal(mask, hyper, i, sigma2))
            .collect()
    }
}

const NODE_GUARD: usize = 12;
const GRAPH_GUARD: usize = 5;
const JOINT_GUARD_BITS: usize = 16;

/// Posterior over the `2^(p-1)` neighborhoods of one node, with sigma^2
/// held fixed. Masks index the other nodes in ascending order, skipping the
/// node itself.
#[derive(Debug, Clone)]
pub struct NodePosterior {
    pub node: usize,
    pub p: usize,
    pub log_probs: Vec<f64>,
}

impl NodePosterior {
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|lp| lp.exp()).collect()
    }

    /// Marginal inclusion probability of the edge to node `j`.
    pub fn edge_marginal(&self, j: usize) -> f64 {
        let pos = gamma_pos(self.node, j);
        self.log_probs
            .iter()
            .enumerate()
            .filter(|(mask, _)| (mask >> pos) & 1 == 1)
            .map(|(_, lp)| lp.exp())
            .sum()
    }
}

/// Enumerates the unconstrained (directed) neighborhood posterior of node
/// `i` given fixed `sigma2_i`.
pub fn exact_node_posterior(
    x: &ObservationMatrix,
    i: usize,
    sigma2_i: f64,
    hyper: &Hyperparams,
) -> Result<NodePosterior> {
    let p = x.p();
    if p > NODE_GUARD {
        return Err(Error::GuardExceeded {
            what: "node posterior enumeration",
            size: p,
            limit: NODE_GUARD,
        });
    }
    let stats = NodeStats::new(x, i);
    let likes = stats.table(hyper, i, sigma2_i);
    let lq = hyper.q.ln();
    let l1q = (1.0 - hyper.q).ln();
    let mut logw: Vec<f64> = likes
        .into_iter()
        .enumerate()
        .map(|(mask, ll)| {
            let ones = mask.count_ones() as f64;
            ll + ones * lq + (p as f64 - 1.0 - ones) * l1q
        })
        .collect();
    let z = log_sum_exp(&logw);
    for v in &mut logw {
        *v -= z;
    }
    Ok(NodePosterior {
        node: i,
        p,
        log_probs: logw,
    })
}

/// Posterior over all symmetric graphs, with sigma^2 held fixed. Masks index
/// unordered pairs in `pair_index` order.
#[derive(Debug, Clone)]
pub struct GraphPosterior {
    pub p: usize,
    pub log_probs: Vec<f64>,
}

impl GraphPosterior {
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|lp| lp.exp()).collect()
    }

    pub fn prob_of(&self, g: &Adjacency) -> f64 {
        let mut mask = 0usize;
        for (k, (i, j)) in pairs(self.p).enumerate() {
            if g.has_edge(i, j) {
                mask |= 1 << k;
            }
        }
        self.log_probs[mask].exp()
    }

    /// Matrix of marginal edge probabilities.
    pub fn edge_marginals(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.p, self.p);
        for (mask, lp) in self.log_probs.iter().enumerate() {
            let prob = lp.exp();
            for (k, (i, j)) in pairs(self.p).enumerate() {
                if (mask >> k) & 1 == 1 {
                    m[(i, j)] += prob;
                    m[(j, i)] += prob;
                }
            }
        }
        m
    }
}

/// Enumerates the symmetric-graph posterior given fixed `sigma2` per node.
/// This is the stationary law of the symmetric-mode sampler with pinned
/// sigma^2.
pub fn exact_graph_posterior(
    x: &ObservationMatrix,
    sigma2: &[f64],
    hyper: &Hyperparams,
) -> Result<GraphPosterior> {
    let p = x.p();
    if p > GRAPH_GUARD {
        return Err(Error::GuardExceeded {
            what: "graph posterior enumeration",
            size: p,
            limit: GRAPH_GUARD,
        });
    }
    if sigma2.len() != p {
        return Err(Error::InvalidConfig("sigma2 must have length p".into()));
    }
    let tables: Vec<Vec<f64>> = (0..p)
        .map(|i| NodeStats::new(x, i).table(hyper, i, sigma2[i]))
        .collect();
    let n_pairs = pair_count(p);
    let pair_list: Vec<(usize, usize)> = pairs(p).collect();
    let lq = hyper.q.ln();
    let l1q = (1.0 - hyper.q).ln();

    let mut logw = Vec::with_capacity(1 << n_pairs);
    for mask in 0..(1usize << n_pairs) {
        // row masks per node implied by the symmetric pair mask
        let mut row_masks = vec![0usize; p];
        for (k, &(i, j)) in pair_list.iter().enumerate() {
            if (mask >> k) & 1 == 1 {
                row_masks[i] |= 1 << gamma_pos(i, j);
                row_masks[j] |= 1 << gamma_pos(j, i);
            }
        }
        let edges = mask.count_ones() as f64;
        let mut w = edges * lq + (n_pairs as f64 - edges) * l1q;
        for i in 0..p {
            w += tables[i][row_masks[i]];
        }
        logw.push(w);
    }
    let z = log_sum_exp(&logw);
    for v in &mut logw {
        *v -= z;
    }
    Ok(GraphPosterior { p, log_probs: logw })
}

/// Posterior over every joint configuration of a tiny grid (symmetric mode,
/// sigma^2 and the field parameters held fixed).
///
/// Bit layout: bit `k * n_cells + c` is the state of unordered pair `k` in
/// present cell `c`.
#[derive(Debug, Clone)]
pub struct JointPosterior {
    pub p: usize,
    pub n_cells: usize,
    pub log_probs: Vec<f64>,
}

impl JointPosterior {
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|lp| lp.exp()).collect()
    }

    /// Marginal edge probabilities for one present cell.
    pub fn edge_marginals(&self, cell: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.p, self.p);
        for (mask, lp) in self.log_probs.iter().enumerate() {
            let prob = lp.exp();
            for (k, (i, j)) in pairs(self.p).enumerate() {
                if (mask >> (k * self.n_cells + cell)) & 1 == 1 {
                    m[(i, j)] += prob;
                    m[(j, i)] += prob;
                }
            }
        }
        m
    }

    /// Probability that the edge for pair `(i, j)` takes the same state in
    /// cells `a` and `b`.
    pub fn agreement_prob(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        let k = pair_index(self.p, i.min(j), i.max(j));
        self.log_probs
            .iter()
            .enumerate()
            .filter(|(mask, _)| {
                let sa = (mask >> (k * self.n_cells + a)) & 1;
                let sb = (mask >> (k * self.n_cells + b)) & 1;
                sa == sb
            })
            .map(|(_, lp)| lp.exp())
            .sum()
    }
}

/// Enumerates the exact joint posterior over all `(pair, cell)` indicator
/// bits. `sigma2` and `hypers` align with the grid's present cells.
pub fn exact_joint_posterior(
    grid: &DatasetGrid,
    sigma2: &[Vec<f64>],
    hypers: &[Hyperparams],
    phi: &MrfParams,
) -> Result<JointPosterior> {
    let present = grid.present_cells();
    let n_cells = present.len();
    let p = grid
        .p()
        .ok_or_else(|| Error::InvalidGrid("empty grid".into()))?;
    let n_pairs = pair_count(p);
    let bits = n_cells * n_pairs;
    if bits > JOINT_GUARD_BITS {
        return Err(Error::GuardExceeded {
            what: "joint posterior enumeration",
            size: bits,
            limit: JOINT_GUARD_BITS,
        });
    }
    if sigma2.len() != n_cells || hypers.len() != n_cells {
        return Err(Error::InvalidConfig(
            "sigma2 and hypers must align with present cells".into(),
        ));
    }

    // per-cell, per-node marginal likelihood tables
    let tables: Vec<Vec<Vec<f64>>> = present
        .iter()
        .enumerate()
        .map(|(c, &(b, t))| {
            let x = grid.cell(b, t).expect("present");
            (0..p)
                .map(|i| NodeStats::new(x, i).table(&hypers[c], i, sigma2[c][i]))
                .collect()
        })
        .collect();

    // shared MRF table over present-cell configurations
    let topo = GridTopology::from_grid(grid);
    let mrf_table = exact_mrf_log_prob_table(&topo, phi)?;

    let pair_list: Vec<(usize, usize)> = pairs(p).collect();
    let mut logw = Vec::with_capacity(1 << bits);
    for mask in 0..(1usize << bits) {
        let mut w = 0.0;
        for (k, _) in pair_list.iter().enumerate() {
            let config = (mask >> (k * n_cells)) & ((1 << n_cells) - 1);
            w += mrf_table[config];
        }
        for (c, cell_tables) in tables.iter().enumerate() {
            let mut row_masks = vec![0usize; p];
            for (k, &(i, j)) in pair_list.iter().enumerate() {
                if (mask >> (k * n_cells + c)) & 1 == 1 {
                    row_masks[i] |= 1 << gamma_pos(i, j);
                    row_masks[j] |= 1 << gamma_pos(j, i);
                }
            }
            for (i, table) in cell_tables.iter().enumerate() {
                w += table[row_masks[i]];
            }
        }
        logw.push(w);
    }
    let z = log_sum_exp(&logw);
    for v in &mut logw {
        *v -= z;
    }
    Ok(JointPosterior {
        p,
        n_cells,
        log_probs: logw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::center_columns;
    use crate::rng::{substream, Stream};
    use crate::simgen::{gen_precision, gen_random_graph, sample_mvn, EntryMode};

    fn test_data(p: usize, n: usize, seed: u64) -> ObservationMatrix {
        let mut rng = substream(seed, Stream::SimData, &[p as u64]);
        let g = gen_random_graph(p, 0.4, &mut rng);
        let theta = gen_precision(&g, EntryMode::Different, None, &mut rng);
        center_columns(&sample_mvn(&theta, n, &mut rng).unwrap())
    }

    fn hyper_for(x: &ObservationMatrix, q: f64) -> Hyperparams {
        let cfg = crate::hyper::UserConfig {
            q: Some(q),
            ..Default::default()
        };
        crate::hyper::resolve_hyperparams_cell(x, &cfg).unwrap()
    }

    #[test]
    fn node_posterior_normalizes() {
        let x = test_data(4, 20, 1);
        let hyper = hyper_for(&x, 0.2);
        let post = exact_node_posterior(&x, 0, 1.0, &hyper).unwrap();
        let total: f64 = post.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vanishing_q_empties_the_neighborhood() {
        let x = test_data(4, 20, 2);
        let hyper = Hyperparams::new(1e-9, 0.1, 0.1, vec![0.2; 4], -0.5).unwrap();
        let post = exact_node_posterior(&x, 1, 1.0, &hyper).unwrap();
        assert!(post.probs()[0] > 0.999);
        for j in [0usize, 2, 3] {
            assert!(post.edge_marginal(j) < 1e-3);
        }
    }

    #[test]
    fn node_guard_trips() {
        let x = test_data(13, 20, 3);
        let hyper = hyper_for(&x, 0.1);
        assert!(matches!(
            exact_node_posterior(&x, 0, 1.0, &hyper),
            Err(Error::GuardExceeded { .. })
        ));
    }

    #[test]
    fn graph_posterior_normalizes_and_bounds_marginals() {
        let x = test_data(4, 25, 4);
        let hyper = hyper_for(&x, 0.2);
        let post = exact_graph_posterior(&x, &[1.0; 4], &hyper).unwrap();
        let total: f64 = post.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let marg = post.edge_marginals();
        for (i, j) in pairs(4) {
            assert!((0.0..=1.0).contains(&marg[(i, j)]));
            assert_eq!(marg[(i, j)], marg[(j, i)]);
        }
    }

    #[test]
    fn p2_graph_posterior_matches_hand_formula() {
        let x = test_data(2, 12, 5);
        let hyper = hyper_for(&x, 0.3);
        let s2 = [0.9, 1.1];
        let post = exact_graph_posterior(&x, &s2, &hyper).unwrap();

        // rank-one closed form for C = s2 I + tau^2 u u'
        let hand = |tau: [f64; 2]| -> f64 {
            let mut total = 0.0;
            for i in 0..2 {
                let y = x.values().column(i).clone_owned();
                let u = x.values().column(1 - i).clone_owned();
                let uu = u.norm_squared();
                let uy = u.dot(&y);
                let t2 = tau[i] * tau[i];
                let n = y.len() as f64;
                let logdet = n * s2[i].ln() + (1.0 + t2 * uu / s2[i]).ln();
                let quad = (y.norm_squared() - t2 * uy * uy / (s2[i] + t2 * uu)) / s2[i];
                total += -0.5 * (n * LN_2PI + logdet + quad);
            }
            total
        };
        let w0 = (1.0 - hyper.q).ln() + hand([hyper.tau0[0], hyper.tau0[1]]);
        let w1 = hyper.q.ln() + hand([hyper.tau1[0], hyper.tau1[1]]);
        let z = log_sum_exp(&[w0, w1]);
        assert!((post.log_probs[0] - (w0 - z)).abs() < 1e-10);
        assert!((post.log_probs[1] - (w1 - z)).abs() < 1e-10);
    }

    #[test]
    fn joint_posterior_normalizes() {
        let x1 = test_data(3, 15, 6);
        let x2 = test_data(3, 18, 7);
        let grid = crate::model::DatasetGrid::from_cells(vec![
            (
                crate::model::CellKey {
                    locus: "A".into(),
                    period: 1,
                },
                x1,
            ),
            (
                crate::model::CellKey {
                    locus: "B".into(),
                    period: 1,
                },
                x2,
            ),
        ])
        .unwrap();
        let hypers: Vec<Hyperparams> = grid
            .present_cells()
            .iter()
            .map(|&(b, t)| hyper_for(grid.cell(b, t).unwrap(), 0.2))
            .collect();
        let phi = MrfParams {
            eta1: -0.5,
            eta_s: 1.0,
            eta_t: 0.5,
        };
        let post =
            exact_joint_posterior(&grid, &[vec![1.0; 3], vec![1.0; 3]], &hypers, &phi).unwrap();
        let total: f64 = post.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(post.log_probs.len(), 1 << 6);
    }

    #[test]
    fn joint_guard_trips() {
        let x1 = test_data(5, 15, 8);
        let grid = crate::model::DatasetGrid::from_cells(vec![
            (
                crate::model::CellKey {
                    locus: "A".into(),
                    period: 1,
                },
                x1.clone(),
            ),
            (
                crate::model::CellKey {
                    locus: "B".into(),
                    period: 1,
                },
                x1,
            ),
        ])
        .unwrap();
        let hypers: Vec<Hyperparams> = grid
            .present_cells()
            .iter()
            .map(|&(b, t)| hyper_for(grid.cell(b, t).unwrap(), 0.2))
            .collect();
        let phi = MrfParams {
            eta1: -0.5,
            eta_s: 1.0,
            eta_t: 0.5,
        };
        assert!(matches!(
            exact_joint_posterior(&grid, &[vec![1.0; 5], vec![1.0; 5]], &hypers, &phi),
            Err(Error::GuardExceeded { .. })
        ));
    }
}
