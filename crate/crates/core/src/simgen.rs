//! Synthetic data generators: random graphs, precision matrices, temporal
//! chains, spatial perturbations, and Gaussian sampling.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{pair_count, pairs, Adjacency};
use crate::model::{CellKey, DatasetGrid, ObservationMatrix};
use crate::rng::{substream, Stream};

/// Whether precision entries on shared edges repeat the reference values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryMode {
    #[default]
    Different,
    Same,
}

/// One experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSpec {
    pub p: usize,
    pub n: usize,
    pub sparsity: f64,
    /// Fraction of edges replaced between reference graphs (parallel loci)
    /// or between adjacent time points (temporal chain).
    #[serde(alias = "change")]
    pub change_fraction: f64,
    /// Per-cell replacement fraction applied on top of the shared chain in
    /// grids with both axes.
    #[serde(default, alias = "perturbation")]
    pub perturbation_fraction: f64,
    #[serde(alias = "loci")]
    pub n_loci: usize,
    #[serde(alias = "periods")]
    pub n_periods: usize,
    #[serde(default)]
    pub entry_mode: EntryMode,
    pub seed: u64,
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| (0.0..=1.0).contains(&f);
        if self.p < 2 {
            return Err(Error::InvalidConfig("p must be >= 2".into()));
        }
        if self.n_loci == 0 || self.n_periods == 0 {
            return Err(Error::InvalidConfig(
                "need at least one locus and period".into(),
            ));
        }
        if !frac_ok(self.sparsity)
            || !frac_ok(self.change_fraction)
            || !frac_ok(self.perturbation_fraction)
        {
            return Err(Error::InvalidConfig("fractions must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

fn round_half_up(x: f64) -> usize {
    x.round() as usize
}

/// Chooses `k` distinct indices from `0..len` by partial Fisher-Yates.
fn sample_without_replacement<R: Rng>(len: usize, k: usize, rng: &mut R) -> Vec<usize> {
    debug_assert!(k <= len);
    let mut idx: Vec<usize> = (0..len).collect();
    for pos in 0..k {
        let other = pos + rng.random_range(0..len - pos);
        idx.swap(pos, other);
    }
    idx.truncate(k);
    idx
}

/// Uniform graph with exactly `round(sparsity * p(p-1)/2)` edges.
pub fn gen_random_graph<R: Rng>(p: usize, sparsity: f64, rng: &mut R) -> Adjacency {
    let all: Vec<(usize, usize)> = pairs(p).collect();
    let m = round_half_up(sparsity * pair_count(p) as f64);
    let chosen = sample_without_replacement(all.len(), m, rng);
    let edges: Vec<(usize, usize)> = chosen.into_iter().map(|k| all[k]).collect();
    Adjacency::from_edges(p, &edges)
}

/// Removes `round(fraction * |E|)` uniformly chosen edges and adds back the
/// same number of uniformly chosen non-edges of the input graph; edge count
/// is conserved exactly.
pub fn perturb_graph<R: Rng>(g: &Adjacency, fraction: f64, rng: &mut R) -> Result<Adjacency> {
    let edges = g.edges();
    let r = round_half_up(fraction * edges.len() as f64);
    let non_edges = g.non_edges();
    if r > non_edges.len() {
        return Err(Error::InfeasiblePerturbation {
            needed: r,
            available: non_edges.len(),
        });
    }
    let mut out = g.clone();
    for k in sample_without_replacement(edges.len(), r, rng) {
        let (i, j) = edges[k];
        out.set(i, j, false);
    }
    for k in sample_without_replacement(non_edges.len(), r, rng) {
        let (i, j) = non_edges[k];
        out.set(i, j, true);
    }
    Ok(out)
}

/// Markov chain of graphs: each step replaces `change` of the edges.
/// Returns `len` graphs starting with `g0`.
pub fn evolve_hmm<R: Rng>(
    g0: &Adjacency,
    change: f64,
    len: usize,
    rng: &mut R,
) -> Result<Vec<Adjacency>> {
    let mut chain = Vec::with_capacity(len);
    chain.push(g0.clone());
    for _ in 1..len {
        let next = perturb_graph(chain.last().unwrap(), change, rng)?;
        chain.push(next);
    }
    Ok(chain)
}

/// Precision matrix supported exactly on `g`: off-diagonal entries drawn
/// from +-[0.1, 0.4], diagonal set to the row's absolute off-diagonal sum
/// plus 0.5 (diagonally dominant, so the minimum eigenvalue is >= 0.5).
///
/// With [`EntryMode::Same`], entries on edges shared with the reference copy
/// the reference values.
pub fn gen_precision<R: Rng>(
    g: &Adjacency,
    entry_mode: EntryMode,
    shared_with: Option<(&Adjacency, &DMatrix<f64>)>,
    rng: &mut R,
) -> DMatrix<f64> {
    let p = g.node_count();
    let mut theta = DMatrix::zeros(p, p);
    for (i, j) in pairs(p) {
        if !g.has_edge(i, j) {
            continue;
        }
        let value = match (entry_mode, shared_with) {
            (EntryMode::Same, Some((ref_graph, ref_theta))) if ref_graph.has_edge(i, j) => {
                ref_theta[(i, j)]
            }
            _ => {
                let magnitude = rng.random_range(0.1..0.4);
                let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
                sign * magnitude
            }
        };
        theta[(i, j)] = value;
        theta[(j, i)] = value;
    }
    for i in 0..p {
        theta[(i, i)] = theta.row(i).iter().map(|v| v.abs()).sum::<f64>() + 0.5;
    }
    theta
}

/// Draws `n` rows from `N(0, precision^-1)` through a triangular solve
/// against the Cholesky factor; the covariance is never formed.
pub fn sample_mvn<R: Rng>(
    precision: &DMatrix<f64>,
    n: usize,
    rng: &mut R,
) -> Result<ObservationMatrix> {
    let p = precision.nrows();
    let chol = Cholesky::new(precision.clone()).ok_or(Error::CholeskyFailure { node: 0 })?;
    let l = chol.l();
    let mut out = DMatrix::zeros(n, p);
    for r in 0..n {
        let z = crate::single::standard_normal_vector(p, rng);
        let y = l
            .tr_solve_lower_triangular(&z)
            .ok_or(Error::CholeskyFailure { node: 0 })?;
        out.row_mut(r).copy_from(&y.transpose());
    }
    Ok(ObservationMatrix::new(out))
}

/// A generated grid together with its ground truth.
#[derive(Debug, Clone)]
pub struct SimulatedExperiment {
    pub grid: DatasetGrid,
    /// Per-cell truth in the grid's present-cell (locus-major) order.
    pub truths: Vec<(CellKey, Adjacency)>,
    pub precisions: Vec<(CellKey, DMatrix<f64>)>,
}

impl SimulatedExperiment {
    pub fn truth_for(&self, key: &CellKey) -> Option<&Adjacency> {
        self.truths.iter().find(|(k, _)| k == key).map(|(_, g)| g)
    }
}

/// Builds the full experiment for a spec.
///
/// Grid shapes select the design: a single cell is one random graph;
/// parallel loci perturb a reference graph by `change_fraction`; a temporal
/// axis evolves the graph as a Markov chain; a full grid replicates the
/// chain across loci and perturbs each cell by `perturbation_fraction`.
pub fn build_experiment(spec: &SimSpec) -> Result<SimulatedExperiment> {
    spec.validate()?;
    let seed = spec.seed;
    let p = spec.p;

    // per-cell graphs, locus-major
    let mut cell_graphs: Vec<Vec<Adjacency>> = Vec::with_capacity(spec.n_loci);
    // reference (graph, precision) per cell for EntryMode::Same sharing
    let mut base_theta: Vec<Option<(Adjacency, DMatrix<f64>)>> = Vec::new();

    let mut chain_rng = substream(seed, Stream::SimGraph, &[]);
    if spec.n_periods == 1 {
        // parallel graphs: locus 1 is the reference
        let g1 = gen_random_graph(p, spec.sparsity, &mut chain_rng);
        for b in 0..spec.n_loci {
            let g = if b == 0 {
                g1.clone()
            } else {
                let mut rng = substream(seed, Stream::SimPerturb, &[b as u64, 0]);
                perturb_graph(&g1, spec.change_fraction, &mut rng)?
            };
            cell_graphs.push(vec![g]);
        }
    } else {
        let g0 = gen_random_graph(p, spec.sparsity, &mut chain_rng);
        let chain = evolve_hmm(&g0, spec.change_fraction, spec.n_periods, &mut chain_rng)?;
        if spec.n_loci == 1 {
            cell_graphs.push(chain);
        } else {
            // shared chain replicated, then per-cell perturbation
            for b in 0..spec.n_loci {
                let mut row = Vec::with_capacity(spec.n_periods);
                for (t, g) in chain.iter().enumerate() {
                    let mut rng = substream(seed, Stream::SimPerturb, &[b as u64, t as u64]);
                    row.push(perturb_graph(g, spec.perturbation_fraction, &mut rng)?);
                }
                cell_graphs.push(row);
            }
            // chain-level reference precisions for Same mode
            if spec.entry_mode == EntryMode::Same {
                let mut prev: Option<(Adjacency, DMatrix<f64>)> = None;
                for (t, g) in chain.iter().enumerate() {
                    let mut rng = substream(seed, Stream::SimPrecision, &[u64::MAX, t as u64]);
                    let theta = gen_precision(
                        g,
                        spec.entry_mode,
                        prev.as_ref().map(|(a, m)| (a, m)),
                        &mut rng,
                    );
                    base_theta.push(Some((g.clone(), theta.clone())));
                    prev = Some((g.clone(), theta));
                }
            }
        }
    }

    let mut entries = Vec::new();
    let mut truths = Vec::new();
    let mut precisions = Vec::new();
    // reference for Same mode in the parallel and temporal designs
    let mut running_ref: Option<(Adjacency, DMatrix<f64>)> = None;

    for (b, locus_graphs) in cell_graphs.iter().enumerate() {
        for (t, cell_graph) in locus_graphs.iter().enumerate() {
            let key = CellKey {
                locus: format!("L{}", b + 1),
                period: (t + 1) as i64,
            };
            let g = cell_graph.clone();
            let shared: Option<(&Adjacency, &DMatrix<f64>)> = if spec.entry_mode == EntryMode::Same
            {
                if spec.n_loci > 1 && spec.n_periods > 1 {
                    base_theta[t].as_ref().map(|(a, m)| (a, m))
                } else {
                    running_ref.as_ref().map(|(a, m)| (a, m))
                }
            } else {
                None
            };
            let mut prec_rng = substream(seed, Stream::SimPrecision, &[b as u64, t as u64]);
            let theta = gen_precision(&g, spec.entry_mode, shared, &mut prec_rng);
            if spec.entry_mode == EntryMode::Same && spec.n_loci == 1 {
                // temporal cascade: next period shares with this one
                running_ref = Some((g.clone(), theta.clone()));
            }
            if spec.entry_mode == EntryMode::Same && spec.n_periods == 1 && b == 0 {
                // parallel design: locus 1 is the fixed reference
                running_ref = Some((g.clone(), theta.clone()));
            }
            let mut data_rng = substream(seed, Stream::SimData, &[b as u64, t as u64]);
            let x = sample_mvn(&theta, spec.n, &mut data_rng)?;
            entries.push((key.clone(), x));
            truths.push((key.clone(), g));
            precisions.push((key, theta));
        }
    }

    Ok(SimulatedExperiment {
        grid: DatasetGrid::from_cells(entries)?,
        truths,
        precisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> impl Rng {
        substream(seed, Stream::SimGraph, &[99])
    }

    #[test]
    fn random_graph_edge_counts() {
        let mut r = rng(0);
        assert_eq!(gen_random_graph(100, 0.05, &mut r).edge_count(), 248);
        assert_eq!(gen_random_graph(10, 0.0, &mut r).edge_count(), 0);
        assert_eq!(gen_random_graph(10, 1.0, &mut r).edge_count(), 45);
    }

    #[test]
    fn perturb_identity_at_zero() {
        let mut r = rng(1);
        let g = gen_random_graph(20, 0.2, &mut r);
        let out = perturb_graph(&g, 0.0, &mut r).unwrap();
        assert_eq!(g, out);
    }

    #[test]
    fn perturb_conserves_count_and_drops_removed() {
        let mut r = rng(2);
        let g = gen_random_graph(30, 0.1, &mut r);
        let m = g.edge_count();
        let out = perturb_graph(&g, 1.0, &mut r).unwrap();
        assert_eq!(out.edge_count(), m);
        // full replacement: nothing from the original survives
        assert_eq!(g.overlap(&out), 0);
    }

    #[test]
    fn perturb_infeasible_when_pool_too_small() {
        // nearly complete graph: removing many edges cannot be re-added
        let mut r = rng(3);
        let mut g = Adjacency::complete(10);
        g.set(0, 1, false);
        let err = perturb_graph(&g, 0.5, &mut r).unwrap_err();
        assert!(matches!(err, Error::InfeasiblePerturbation { .. }));
    }

    #[test]
    fn hmm_overlap_is_exact() {
        let mut r = rng(4);
        // 30 edges: change 0.2 removes exactly 6
        let g0 = gen_random_graph(25, 0.1, &mut r);
        assert_eq!(g0.edge_count(), 30);
        let chain = evolve_hmm(&g0, 0.2, 6, &mut r).unwrap();
        assert_eq!(chain.len(), 6);
        for w in chain.windows(2) {
            assert_eq!(w[0].edge_count(), 30);
            assert_eq!(w[0].overlap(&w[1]), 24);
        }
    }

    #[test]
    fn hmm_zero_change_is_constant() {
        let mut r = rng(5);
        let g0 = gen_random_graph(12, 0.3, &mut r);
        let chain = evolve_hmm(&g0, 0.0, 4, &mut r).unwrap();
        assert!(chain.iter().all(|g| *g == g0));
    }

    #[test]
    fn precision_empty_graph_is_half_identity_plus() {
        let mut r = rng(6);
        let theta = gen_precision(&Adjacency::empty(5), EntryMode::Different, None, &mut r);
        assert_eq!(theta, DMatrix::from_diagonal_element(5, 5, 0.5));
    }

    #[test]
    fn precision_support_and_magnitudes() {
        let mut r = rng(7);
        let g = gen_random_graph(15, 0.2, &mut r);
        let theta = gen_precision(&g, EntryMode::Different, None, &mut r);
        for (i, j) in pairs(15) {
            if g.has_edge(i, j) {
                let m = theta[(i, j)].abs();
                assert!((0.1..=0.4).contains(&m));
                assert_eq!(theta[(i, j)], theta[(j, i)]);
            } else {
                assert_eq!(theta[(i, j)], 0.0);
            }
        }
        let eig = theta.symmetric_eigenvalues();
        assert!(eig.iter().all(|&l| l >= 0.5 - 1e-9));
    }

    #[test]
    fn same_mode_copies_shared_entries_bit_for_bit() {
        let mut r = rng(8);
        let g1 = gen_random_graph(12, 0.25, &mut r);
        let theta1 = gen_precision(&g1, EntryMode::Same, None, &mut r);
        let g2 = perturb_graph(&g1, 0.3, &mut r).unwrap();
        let theta2 = gen_precision(&g2, EntryMode::Same, Some((&g1, &theta1)), &mut r);
        for (i, j) in pairs(12) {
            if g1.has_edge(i, j) && g2.has_edge(i, j) {
                assert_eq!(theta1[(i, j)].to_bits(), theta2[(i, j)].to_bits());
            }
        }
    }

    #[test]
    fn mvn_empty_and_shape() {
        let mut r = rng(9);
        let theta = DMatrix::from_diagonal_element(3, 3, 2.0);
        let x = sample_mvn(&theta, 0, &mut r).unwrap();
        assert_eq!((x.n(), x.p()), (0, 3));
        let x = sample_mvn(&theta, 7, &mut r).unwrap();
        assert_eq!((x.n(), x.p()), (7, 3));
    }

    #[test]
    fn experiment_is_seed_deterministic() {
        let spec = SimSpec {
            p: 10,
            n: 15,
            sparsity: 0.1,
            change_fraction: 0.4,
            perturbation_fraction: 0.1,
            n_loci: 3,
            n_periods: 4,
            entry_mode: EntryMode::Different,
            seed: 77,
        };
        let a = build_experiment(&spec).unwrap();
        let b = build_experiment(&spec).unwrap();
        assert_eq!(a.truths, b.truths);
        for ((ka, xa), (kb, xb)) in a
            .grid
            .present_cells()
            .iter()
            .map(|&(bb, t)| (a.grid.key(bb, t), a.grid.cell(bb, t).unwrap()))
            .zip(
                b.grid
                    .present_cells()
                    .iter()
                    .map(|&(bb, t)| (b.grid.key(bb, t), b.grid.cell(bb, t).unwrap())),
            )
        {
            assert_eq!(ka, kb);
            assert_eq!(xa.values(), xb.values());
        }
    }

    #[test]
    fn degenerate_grid_is_single_cell() {
        let spec = SimSpec {
            p: 6,
            n: 12,
            sparsity: 0.2,
            change_fraction: 0.0,
            perturbation_fraction: 0.0,
            n_loci: 1,
            n_periods: 1,
            entry_mode: EntryMode::Different,
            seed: 3,
        };
        let exp = build_experiment(&spec).unwrap();
        assert_eq!(exp.grid.present_cells().len(), 1);
        assert_eq!(exp.truths.len(), 1);
    }

    #[test]
    fn truth_support_matches_precision() {
        let spec = SimSpec {
            p: 8,
            n: 10,
            sparsity: 0.3,
            change_fraction: 0.5,
            perturbation_fraction: 0.2,
            n_loci: 2,
            n_periods: 3,
            entry_mode: EntryMode::Same,
            seed: 21,
        };
        let exp = build_experiment(&spec).unwrap();
        for ((_, g), (_, theta)) in exp.truths.iter().zip(&exp.precisions) {
            for (i, j) in pairs(8) {
                assert_eq!(g.has_edge(i, j), theta[(i, j)] != 0.0);
            }
        }
    }
}
