//! Distribution-level checks of the sampler building blocks against
//! independent closed-form or brute-force oracles.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use std::sync::Arc;
use stggm::graph::{pair_count, pairs, Adjacency};
use stggm::hyper::Hyperparams;
use stggm::logistic;
use stggm::model::{center_columns, ObservationMatrix};
use stggm::mrf::{mh_update_eta, pseudolikelihood_log, EdgeGammaGrid, GridTopology, MrfParams};
use stggm::rng::{substream, Stream};
use stggm::simgen::{evolve_hmm, gen_random_graph, sample_mvn};
use stggm::single::{
    build_shrinkage_diag, gamma_log_odds_single, sample_beta_row, sample_beta_row_with_noise,
    sample_sigma2,
};

fn fixed_design(n: usize, p: usize, seed: u64) -> ObservationMatrix {
    let mut rng = substream(seed, Stream::SimData, &[n as u64, p as u64]);
    let m = DMatrix::from_fn(n, p, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    });
    center_columns(&ObservationMatrix::new(m))
}

/// Empirical mean and covariance of beta-row draws match the closed-form
/// moments computed by direct dense inversion, within 4 MC standard errors.
#[test]
fn beta_full_conditional_moments() {
    let x = fixed_design(12, 3, 100);
    let i = 0usize;
    let sigma2 = 0.8f64;
    let d = DVector::from_vec(vec![2.0, 5.0]);

    // dense-inverse oracle
    let xv = x.values();
    let cols: Vec<usize> = (0..3).filter(|&j| j != i).collect();
    let mut a = DMatrix::zeros(2, 2);
    let mut xty = DVector::zeros(2);
    for (r, &jr) in cols.iter().enumerate() {
        xty[r] = xv.column(jr).dot(&xv.column(i));
        for (c, &jc) in cols.iter().enumerate() {
            a[(r, c)] = xv.column(jr).dot(&xv.column(jc));
        }
        a[(r, r)] += d[r];
    }
    let a_inv = a.clone().try_inverse().unwrap();
    let mean_oracle = &a_inv * &xty;
    let cov_oracle = &a_inv * sigma2;

    let m = 100_000usize;
    let mut sum = DVector::zeros(2);
    let mut sum_outer = DMatrix::zeros(2, 2);
    for k in 0..m {
        let mut rng = substream(2024, Stream::BetaRow, &[k as u64]);
        let draw = sample_beta_row(&x, i, &d, sigma2, &mut rng).unwrap();
        sum += &draw;
        sum_outer += &draw * draw.transpose();
    }
    let emp_mean = &sum / m as f64;
    let emp_cov = sum_outer / m as f64 - &emp_mean * emp_mean.transpose();

    for k in 0..2 {
        let se = (cov_oracle[(k, k)] / m as f64).sqrt();
        assert!(
            (emp_mean[k] - mean_oracle[k]).abs() <= 4.0 * se,
            "mean[{k}]: {} vs {} (se {se})",
            emp_mean[k],
            mean_oracle[k]
        );
    }
    for k in 0..2 {
        for l in 0..2 {
            let se = ((cov_oracle[(k, k)] * cov_oracle[(l, l)]
                + cov_oracle[(k, l)] * cov_oracle[(k, l)])
                / m as f64)
                .sqrt();
            assert!(
                (emp_cov[(k, l)] - cov_oracle[(k, l)]).abs() <= 4.0 * se,
                "cov[{k},{l}]: {} vs {}",
                emp_cov[(k, l)],
                cov_oracle[(k, l)]
            );
        }
    }
}

/// The factorized draw equals a dense-inverse draw computed from the same
/// standard-normal input, to 1e-8 relative error.
#[test]
fn cholesky_path_matches_dense_inverse_path() {
    let x = fixed_design(15, 4, 200);
    let i = 2usize;
    let sigma2 = 1.3f64;
    let xv = x.values();
    let cols: Vec<usize> = (0..4).filter(|&j| j != i).collect();
    let mut a = DMatrix::zeros(3, 3);
    let mut xty = DVector::zeros(3);
    for (r, &jr) in cols.iter().enumerate() {
        xty[r] = xv.column(jr).dot(&xv.column(i));
        for (c, &jc) in cols.iter().enumerate() {
            a[(r, c)] = xv.column(jr).dot(&xv.column(jc));
        }
    }
    for r in 0..3 {
        a[(r, r)] += 1.5 + r as f64;
    }

    let mut rng = substream(7, Stream::BetaRow, &[0]);
    for _ in 0..50 {
        let z = DVector::from_fn(3, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        });
        let fast = sample_beta_row_with_noise(a.clone(), &xty, sigma2.sqrt(), &z, i).unwrap();

        // dense route: same affine map through explicit inverses
        let chol = nalgebra::Cholesky::new(a.clone()).unwrap();
        let l = chol.l();
        let l_inv = l.clone().try_inverse().unwrap();
        let a_inv = a.clone().try_inverse().unwrap();
        let dense = &a_inv * &xty + l_inv.transpose() * &z * sigma2.sqrt();

        let rel = (&fast - &dense).norm() / dense.norm().max(1e-300);
        assert!(rel < 1e-8, "relative gap {rel}");
    }
}

fn hyper_plain(p: usize, q: f64, tau1: f64, delta: f64) -> Hyperparams {
    Hyperparams::new(q, delta, 0.1, vec![tau1; p], -0.5).unwrap()
}

/// sigma^2 draws follow IG(n/2, RSS/2): the 10^6-draw mean matches the
/// closed-form mean within 3 MC standard errors.
#[test]
fn sigma2_mean_matches_inverse_gamma() {
    // column 0 with squared norm exactly 8, beta = 0 => RSS = 8, n = 10
    let mut values = DMatrix::zeros(10, 2);
    for r in 0..10 {
        values[(r, 0)] = if r % 2 == 0 {
            (0.8f64).sqrt()
        } else {
            -(0.8f64).sqrt()
        };
        values[(r, 1)] = if r % 2 == 0 { 1.0 } else { -1.0 };
    }
    let x = ObservationMatrix::new(values);
    let hyper = hyper_plain(2, 0.1, 0.2, 0.1);
    let beta = DVector::zeros(1);

    let m = 1_000_000usize;
    let mut rng = substream(31, Stream::Sigma, &[0]);
    let mut sum = 0.0;
    for _ in 0..m {
        sum += sample_sigma2(&x, 0, &beta, &hyper, &mut rng).unwrap();
    }
    let mean = sum / m as f64;
    // IG(5, 4): mean 1, variance 1/3
    let se = (1.0f64 / 3.0 / m as f64).sqrt();
    assert!((mean - 1.0).abs() <= 3.0 * se, "mean {mean}, se {se}");
}

/// Median of IG(2, 2) draws matches the quantile found by bisecting the
/// closed-form CDF.
#[test]
fn sigma2_median_matches_quantile_oracle() {
    // n = 4, RSS = 4
    let mut values = DMatrix::zeros(4, 2);
    for r in 0..4 {
        values[(r, 0)] = if r % 2 == 0 { 1.0 } else { -1.0 };
        values[(r, 1)] = if r % 2 == 0 { 0.5 } else { -0.5 };
    }
    let x = ObservationMatrix::new(values);
    let hyper = hyper_plain(2, 0.1, 0.2, 0.1);
    let beta = DVector::zeros(1);

    let m = 1_000_000usize;
    let mut rng = substream(37, Stream::Sigma, &[1]);
    let mut draws: Vec<f64> = (0..m)
        .map(|_| sample_sigma2(&x, 0, &beta, &hyper, &mut rng).unwrap())
        .collect();
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let emp_median = draws[m / 2];

    // P(sigma^2 <= x) = P(Gamma(2, rate 1) >= 2/x) = e^{-u}(1+u), u = 2/x
    let cdf = |x: f64| {
        let u = 2.0 / x;
        (-u).exp() * (1.0 + u)
    };
    let (mut lo, mut hi) = (0.1f64, 20.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let median_oracle = 0.5 * (lo + hi);
    // density at the median ~ 0.44; se(median) = 1 / (2 f sqrt(m))
    let se = 1.0 / (2.0 * 0.44 * (m as f64).sqrt());
    assert!(
        (emp_median - median_oracle).abs() <= 3.0 * se,
        "median {emp_median} vs {median_oracle} (se {se})"
    );
}

/// Geweke-style successive-conditional check of the (beta, gamma) updates
/// for one node regression with fixed design and fixed sigma^2: the
/// stationary indicator frequency must be the prior mean q.
#[test]
fn geweke_gamma_frequency_matches_prior() {
    let q = 0.3;
    let hyper = hyper_plain(3, q, 0.5, 0.2);
    let sigma2 = 1.0f64;
    let n = 5usize;
    let design = fixed_design(n, 3, 300); // columns 1, 2 are the regressors

    let n_chains = 24usize;
    let cycles = 700usize;
    let discard = 100usize;
    let mut chain_means = Vec::with_capacity(n_chains);
    for chain in 0..n_chains {
        let mut rng = substream(41, Stream::Gamma, &[chain as u64]);
        // prior init
        let mut gamma = [0u8; 2];
        let mut beta = DVector::zeros(2);
        for k in 0..2 {
            gamma[k] = (rng.random::<f64>() < q) as u8;
            let tau = if gamma[k] == 1 {
                hyper.tau1[0]
            } else {
                hyper.tau0[0]
            };
            let z: f64 = StandardNormal.sample(&mut rng);
            beta[k] = tau * z;
        }
        let mut x = design.values().clone();
        let mut count = 0.0;
        let mut kept = 0usize;
        for cycle in 0..cycles {
            // regenerate the response column from the model
            for r in 0..n {
                let eps: f64 = StandardNormal.sample(&mut rng);
                x[(r, 0)] = x[(r, 1)] * beta[0] + x[(r, 2)] * beta[1] + sigma2.sqrt() * eps;
            }
            let xm = ObservationMatrix::new(x.clone());
            // posterior conditionals
            let d = build_shrinkage_diag(&gamma, sigma2, &hyper, 0);
            beta = sample_beta_row(&xm, 0, &d, sigma2, &mut rng).unwrap();
            for k in 0..2 {
                let lo = gamma_log_odds_single(beta[k], &hyper, 0);
                gamma[k] = (rng.random::<f64>() < logistic(lo)) as u8;
            }
            if cycle >= discard {
                count += (gamma[0] + gamma[1]) as f64 / 2.0;
                kept += 1;
            }
        }
        chain_means.push(count / kept as f64);
    }
    let grand = chain_means.iter().sum::<f64>() / n_chains as f64;
    let var_between = chain_means
        .iter()
        .map(|m| (m - grand) * (m - grand))
        .sum::<f64>()
        / (n_chains as f64 - 1.0);
    let se = (var_between / n_chains as f64).sqrt();
    assert!(
        (grand - q).abs() <= 3.0 * se,
        "gamma frequency {grand} vs prior {q} (se {se})"
    );
}

/// The coupling chain leaves its pseudolikelihood target invariant: the
/// long-run histogram matches direct numerical normalization of the target
/// surface within 0.05 total variation on a 50 x 50 discretization.
#[test]
fn mh_eta_invariant_distribution() {
    let topo = Arc::new(GridTopology::full(2, vec![1, 2]));
    let mut state_rng = substream(97, Stream::Gamma, &[0]);
    let grids: Vec<EdgeGammaGrid> = (0..20)
        .map(|_| {
            let states: Vec<u8> = (0..4).map(|_| state_rng.random_range(0..2u8)).collect();
            EdgeGammaGrid::new(topo.clone(), states)
        })
        .collect();

    let bins = 50usize;
    let width = 2.0 / bins as f64;

    // exact bin masses by 4x4 midpoint quadrature per bin
    let target =
        |phi: &MrfParams| -> f64 { grids.iter().map(|g| pseudolikelihood_log(g, phi)).sum() };
    let mut exact = vec![0.0f64; bins * bins];
    let sub = 4usize;
    for bs in 0..bins {
        for bt in 0..bins {
            let mut mass = 0.0;
            for is in 0..sub {
                for it in 0..sub {
                    let s = (bs as f64 + (is as f64 + 0.5) / sub as f64) * width;
                    let t = (bt as f64 + (it as f64 + 0.5) / sub as f64) * width;
                    mass += target(&MrfParams {
                        eta1: -0.5,
                        eta_s: s,
                        eta_t: t,
                    })
                    .exp();
                }
            }
            exact[bs * bins + bt] = mass;
        }
    }
    let total: f64 = exact.iter().sum();
    for v in &mut exact {
        *v /= total;
    }

    let steps = 3_000_000usize;
    let mut hist = vec![0.0f64; bins * bins];
    let mut phi = MrfParams {
        eta1: -0.5,
        eta_s: 1.0,
        eta_t: 1.0,
    };
    let mut rng = substream(53, Stream::Eta, &[0]);
    for _ in 0..steps {
        phi = mh_update_eta(&grids, &phi, 0.25, &mut rng);
        let bs = ((phi.eta_s / width) as usize).min(bins - 1);
        let bt = ((phi.eta_t / width) as usize).min(bins - 1);
        hist[bs * bins + bt] += 1.0;
    }
    for v in &mut hist {
        *v /= steps as f64;
    }
    let tv = 0.5
        * hist
            .iter()
            .zip(exact.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    assert!(tv <= 0.05, "total variation {tv}");
}

/// Identity-precision samples have near-identity sample covariance, and
/// diagonal precisions give reciprocal column variances.
#[test]
fn mvn_sampler_moments() {
    let m = 100_000usize;
    let mut rng = substream(61, Stream::SimData, &[0]);
    let x = sample_mvn(&DMatrix::identity(3, 3), m, &mut rng).unwrap();
    let xv = x.values();
    let cov = xv.tr_mul(xv) / m as f64;
    for r in 0..3 {
        for c in 0..3 {
            let truth = if r == c { 1.0 } else { 0.0 };
            let se = if r == c {
                (2.0 / m as f64).sqrt()
            } else {
                (1.0 / m as f64).sqrt()
            };
            assert!(
                (cov[(r, c)] - truth).abs() <= 4.0 * se,
                "cov[{r},{c}] = {}",
                cov[(r, c)]
            );
        }
    }

    let d = [0.5f64, 2.0, 8.0];
    let theta = DMatrix::from_diagonal(&DVector::from_row_slice(&d));
    let x = sample_mvn(&theta, m, &mut rng).unwrap();
    for (k, dk) in d.iter().enumerate() {
        let var = x.values().column(k).norm_squared() / m as f64;
        let truth = 1.0 / dk;
        let se = truth * (2.0 / m as f64).sqrt();
        assert!((var - truth).abs() <= 4.0 * se, "var[{k}] = {var}");
    }
}

/// Two-step edge overlap of the graph chain matches an independent
/// set-based simulation of the same replacement process.
#[test]
fn hmm_two_step_overlap_matches_direct_simulation() {
    let p = 8usize;
    let n_pairs = pair_count(p);
    let sparsity = 0.25; // 7 of 28 edges
    let change = 0.2; // removes round(1.4) = 1 edge per step
    let reps = 10_000usize;

    let mut chain_total = 0.0;
    for rep in 0..reps {
        let mut rng = substream(71, Stream::SimGraph, &[rep as u64]);
        let g0 = gen_random_graph(p, sparsity, &mut rng);
        let chain = evolve_hmm(&g0, change, 3, &mut rng).unwrap();
        chain_total += chain[0].overlap(&chain[2]) as f64 / chain[0].edge_count() as f64;
    }
    let chain_mean = chain_total / reps as f64;

    // independent oracle on abstract pair ids
    let mut direct_total = 0.0;
    for rep in 0..reps {
        let mut rng = substream(73, Stream::SimPerturb, &[rep as u64]);
        let mut ids: Vec<usize> = (0..n_pairs).collect();
        for pos in 0..7 {
            let other = pos + rng.random_range(0..n_pairs - pos);
            ids.swap(pos, other);
        }
        let e0: Vec<usize> = ids[..7].to_vec();
        let mut current = e0.clone();
        for _ in 0..2 {
            let drop_pos = rng.random_range(0..current.len());
            let dropped = current.swap_remove(drop_pos);
            loop {
                let candidate = rng.random_range(0..n_pairs);
                // non-edge of the pre-removal graph
                if !current.contains(&candidate) && candidate != dropped {
                    current.push(candidate);
                    break;
                }
            }
        }
        let overlap = e0.iter().filter(|id| current.contains(id)).count();
        direct_total += overlap as f64 / 7.0;
    }
    let direct_mean = direct_total / reps as f64;

    // each mean has sd <~ 0.06/sqrt(reps)
    let tol = 4.0 * 0.06 / (reps as f64).sqrt() * 2.0f64.sqrt();
    assert!(
        (chain_mean - direct_mean).abs() <= tol,
        "chain {chain_mean} vs direct {direct_mean} (tol {tol})"
    );
}

/// Random scores give AUC 1/2 on average.
#[test]
fn random_scores_have_half_auc() {
    let p = 12usize;
    let reps = 400usize;
    let mut rng = substream(83, Stream::SimGraph, &[7]);
    let truth = gen_random_graph(p, 0.15, &mut rng);
    let mut total = 0.0;
    for _ in 0..reps {
        let mut scores = DMatrix::zeros(p, p);
        for (i, j) in pairs(p) {
            let v: f64 = rng.random();
            scores[(i, j)] = v;
            scores[(j, i)] = v;
        }
        let curve = stggm::eval::roc_curve(&scores, &truth);
        total += stggm::eval::auc(&curve);
    }
    let mean = total / reps as f64;
    // sd of a single AUC here is ~0.09
    let se = 0.09 / (reps as f64).sqrt();
    assert!((mean - 0.5).abs() <= 4.0 * se, "mean AUC {mean}");
}

/// Dropping an adjacency from Adjacency::overlap sanity: a graph fully
/// overlaps itself.
#[test]
fn overlap_self_identity() {
    let mut rng = substream(89, Stream::SimGraph, &[11]);
    let g = gen_random_graph(9, 0.3, &mut rng);
    assert_eq!(g.overlap(&g), g.edge_count());
    assert_eq!(Adjacency::empty(9).overlap(&g), 0);
}
