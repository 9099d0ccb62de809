//! Cross-checks of the exact-enumeration posteriors: alternative
//! linear-algebra routes, Monte-Carlo marginalization, and structural
//! properties.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use stggm::graph::pairs;
use stggm::hyper::{Hyperparams, UserConfig};
use stggm::log_sum_exp;
use stggm::model::{center_columns, CellKey, DatasetGrid, ObservationMatrix};
use stggm::mrf::{
    exact_mrf_log_prob_table, mh_update_eta, pseudolikelihood_log, EdgeGammaGrid, GridTopology,
    MrfParams,
};
use stggm::oracle::{
    exact_graph_posterior, exact_joint_posterior, exact_node_posterior, log_marginal_gaussian,
    log_marginal_gaussian_cov,
};
use stggm::rng::{substream, Stream};
use stggm::simgen::{gen_precision, gen_random_graph, sample_mvn, EntryMode};

fn test_matrix(n: usize, p: usize, seed: u64) -> ObservationMatrix {
    let mut rng = substream(seed, Stream::SimData, &[0]);
    let g = gen_random_graph(p, 0.4, &mut rng);
    let theta = gen_precision(&g, EntryMode::Different, None, &mut rng);
    center_columns(&sample_mvn(&theta, n, &mut rng).unwrap())
}

fn resolve(x: &ObservationMatrix, q: f64) -> Hyperparams {
    let cfg = UserConfig {
        q: Some(q),
        ..Default::default()
    };
    stggm::hyper::resolve_hyperparams_cell(x, &cfg).unwrap()
}

/// The Woodbury computation of the Gaussian marginal likelihood agrees with
/// the explicit covariance route to 1e-8 relative error.
#[test]
fn woodbury_matches_covariance_route() {
    let mut rng = substream(1, Stream::SimData, &[1]);
    for trial in 0..30 {
        let n = 6 + (trial % 5);
        let m = 1 + (trial % 4);
        let u = DMatrix::from_fn(n, m, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let y = DVector::from_fn(n, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            2.0 * z
        });
        let taus2: Vec<f64> = (0..m).map(|k| 0.001 + 0.3 * k as f64).collect();
        let sigma2 = 0.5 + 0.1 * (trial % 3) as f64;

        let gram = u.tr_mul(&u);
        let xty = u.tr_mul(&y);
        let fast = log_marginal_gaussian(n, y.norm_squared(), &gram, &xty, &taus2, sigma2);
        let slow = log_marginal_gaussian_cov(&y, &u, &taus2, sigma2);
        let rel = (fast - slow).abs() / slow.abs().max(1e-12);
        assert!(rel < 1e-8, "trial {trial}: {fast} vs {slow}");
    }
}

/// Analytic integration over the coefficients agrees with brute-force
/// Monte-Carlo marginalization for a tiny node regression.
#[test]
fn node_marginal_matches_monte_carlo() {
    let n = 8usize;
    let x = test_matrix(n, 3, 2);
    let hyper = resolve(&x, 0.2);
    let i = 0usize;
    let sigma2 = 0.9f64;

    // first other node gets the slab scale, second the spike
    let xv = x.values();
    let u = DMatrix::from_columns(&[xv.column(1), xv.column(2)]);
    let y = xv.column(i).clone_owned();
    let taus: [f64; 2] = [hyper.tau1[i], hyper.tau0[i]];

    let analytic = {
        let gram = u.tr_mul(&u);
        let xty = u.tr_mul(&y);
        let taus2: Vec<f64> = taus.iter().map(|t| t * t).collect();
        log_marginal_gaussian(n, y.norm_squared(), &gram, &xty, &taus2, sigma2)
    };

    // Monte-Carlo over the coefficient prior
    let draws = 400_000usize;
    let mut rng = substream(3, Stream::BetaRow, &[9]);
    let mut logs = Vec::with_capacity(draws);
    for _ in 0..draws {
        let b0: f64 = StandardNormal.sample(&mut rng);
        let b1: f64 = StandardNormal.sample(&mut rng);
        let beta = DVector::from_vec(vec![taus[0] * b0, taus[1] * b1]);
        let resid = &y - &u * &beta;
        let ll = -0.5 * n as f64 * (2.0 * std::f64::consts::PI * sigma2).ln()
            - 0.5 * resid.norm_squared() / sigma2;
        logs.push(ll);
    }
    let mc = log_sum_exp(&logs) - (draws as f64).ln();
    assert!(
        (analytic - mc).abs() < 0.05,
        "analytic {analytic} vs MC {mc}"
    );
}

/// Relabeling the non-target columns permutes the node posterior marginals
/// accordingly.
#[test]
fn node_posterior_is_permutation_equivariant() {
    let x = test_matrix(20, 4, 4);
    let hyper = resolve(&x, 0.25);
    let post = exact_node_posterior(&x, 0, 1.0, &hyper).unwrap();

    // swap columns 1 and 3 (both non-target)
    let xv = x.values();
    let mut swapped = xv.clone();
    swapped.set_column(1, &xv.column(3));
    swapped.set_column(3, &xv.column(1));
    let xs = ObservationMatrix::new(swapped);
    // hyper scales for the target row are tied to the target column; the
    // other tau entries do not enter node 0's posterior
    let post_swapped = exact_node_posterior(&xs, 0, 1.0, &hyper).unwrap();

    assert!((post.edge_marginal(1) - post_swapped.edge_marginal(3)).abs() < 1e-10);
    assert!((post.edge_marginal(3) - post_swapped.edge_marginal(1)).abs() < 1e-10);
    assert!((post.edge_marginal(2) - post_swapped.edge_marginal(2)).abs() < 1e-10);
}

fn two_cell_grid(p: usize, n: usize, seed: u64) -> DatasetGrid {
    let x1 = test_matrix(n, p, seed);
    let x2 = test_matrix(n, p, seed + 1000);
    DatasetGrid::from_cells(vec![
        (
            CellKey {
                locus: "A".into(),
                period: 1,
            },
            x1,
        ),
        (
            CellKey {
                locus: "B".into(),
                period: 1,
            },
            x2,
        ),
    ])
    .unwrap()
}

/// With zero couplings the joint posterior factorizes into the product of
/// per-cell graph posteriors.
#[test]
fn joint_posterior_factorizes_when_decoupled() {
    let grid = two_cell_grid(3, 14, 5);
    let hypers: Vec<Hyperparams> = grid
        .present_cells()
        .iter()
        .map(|&(b, t)| resolve(grid.cell(b, t).unwrap(), 0.5))
        .collect();
    let sigma2 = vec![vec![1.0; 3], vec![0.8; 3]];

    // logistic(eta1) must equal q for the factorization to hold exactly
    let eta1 = 0.0f64;
    let phi = MrfParams {
        eta1,
        eta_s: 0.0,
        eta_t: 0.0,
    };
    let joint = exact_joint_posterior(&grid, &sigma2, &hypers, &phi).unwrap();

    let per_cell: Vec<_> = grid
        .present_cells()
        .iter()
        .enumerate()
        .map(|(c, &(b, t))| {
            exact_graph_posterior(grid.cell(b, t).unwrap(), &sigma2[c], &hypers[c]).unwrap()
        })
        .collect();

    // check every joint configuration: bit k*2+c
    let n_pairs = 3usize;
    for mask in 0..(1usize << (n_pairs * 2)) {
        let mut expected = 0.0;
        for (c, post) in per_cell.iter().enumerate() {
            let mut cell_mask = 0usize;
            for k in 0..n_pairs {
                if (mask >> (k * 2 + c)) & 1 == 1 {
                    cell_mask |= 1 << k;
                }
            }
            expected += post.log_probs[cell_mask];
        }
        assert!(
            (joint.log_probs[mask] - expected).abs() < 1e-10,
            "mask {mask}: {} vs {expected}",
            joint.log_probs[mask]
        );
    }
}

/// Spatial coupling raises the cross-cell agreement probability of every
/// edge relative to the decoupled posterior on the same data.
#[test]
fn coupling_raises_agreement() {
    let grid = two_cell_grid(3, 20, 6);
    let hypers: Vec<Hyperparams> = grid
        .present_cells()
        .iter()
        .map(|&(b, t)| resolve(grid.cell(b, t).unwrap(), 0.3))
        .collect();
    let sigma2 = vec![vec![1.0; 3]; 2];
    let decoupled = exact_joint_posterior(
        &grid,
        &sigma2,
        &hypers,
        &MrfParams {
            eta1: -0.5,
            eta_s: 0.0,
            eta_t: 0.0,
        },
    )
    .unwrap();
    let coupled = exact_joint_posterior(
        &grid,
        &sigma2,
        &hypers,
        &MrfParams {
            eta1: -0.5,
            eta_s: 2.0,
            eta_t: 0.0,
        },
    )
    .unwrap();
    for (i, j) in pairs(3) {
        let a0 = decoupled.agreement_prob(i, j, 0, 1);
        let a2 = coupled.agreement_prob(i, j, 0, 1);
        assert!(a2 > a0, "edge ({i},{j}): {a2} vs {a0}");
    }
}

/// On independently generated decoupled data the coupling posterior
/// concentrates near zero, both under the Metropolis chain and under exact
/// numerical integration of the grid likelihood.
#[test]
fn eta_s_posterior_concentrates_near_zero_on_independent_data() {
    // 3 loci, 1 period, 100 edges sampled independently with P(1) = logistic(-0.5)
    let topo = Arc::new(GridTopology::full(3, vec![1]));
    let eta1 = -0.5f64;
    let p1 = stggm::logistic(eta1);
    let mut rng = substream(7, Stream::Gamma, &[3]);
    let grids: Vec<EdgeGammaGrid> = (0..100)
        .map(|_| {
            let states: Vec<u8> = (0..3).map(|_| (rng.random::<f64>() < p1) as u8).collect();
            EdgeGammaGrid::new(topo.clone(), states)
        })
        .collect();

    // Metropolis over the pseudolikelihood target
    let mut phi = MrfParams {
        eta1,
        eta_s: 1.0,
        eta_t: 1.0,
    };
    let mut kept = Vec::new();
    let mut mh_rng = substream(7, Stream::Eta, &[4]);
    for step in 0..60_000 {
        phi = mh_update_eta(&grids, &phi, 0.1, &mut mh_rng);
        if step >= 5_000 {
            kept.push(phi.eta_s);
        }
    }
    let mh_mean = kept.iter().sum::<f64>() / kept.len() as f64;

    // exact posterior: numerically integrate the exact likelihood over eta_s
    let bins = 400usize;
    let width = 2.0 / bins as f64;
    let mut weights = Vec::with_capacity(bins);
    for k in 0..bins {
        let eta_s = (k as f64 + 0.5) * width;
        let table = exact_mrf_log_prob_table(
            &topo,
            &MrfParams {
                eta1,
                eta_s,
                eta_t: 0.0,
            },
        )
        .unwrap();
        let ll: f64 = grids.iter().map(|g| table[stggm::mrf::state_mask(g)]).sum();
        weights.push(ll);
    }
    let z = log_sum_exp(&weights);
    let exact_mean: f64 = weights
        .iter()
        .enumerate()
        .map(|(k, w)| ((k as f64 + 0.5) * width) * (w - z).exp())
        .sum();

    assert!(mh_mean < 0.5, "MH mean {mh_mean}");
    assert!(exact_mean < 0.5, "exact mean {exact_mean}");
    assert!(
        (mh_mean - exact_mean).abs() < 0.2,
        "MH {mh_mean} vs exact {exact_mean}"
    );

    // sanity on the same machinery: pseudolikelihood at zero coupling equals
    // the exact likelihood
    let phi0 = MrfParams {
        eta1,
        eta_s: 0.0,
        eta_t: 0.0,
    };
    let table0 = exact_mrf_log_prob_table(&topo, &phi0).unwrap();
    for g in grids.iter().take(5) {
        let exact = table0[stggm::mrf::state_mask(g)];
        assert!((pseudolikelihood_log(g, &phi0) - exact).abs() < 1e-12);
    }
}
