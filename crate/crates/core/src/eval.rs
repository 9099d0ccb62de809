//! Edge scoring against ground truth: ROC curves, partial AUC, top-K
//! selection, and threshold-then-refit model selection with BIC.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{pair_count, pairs, Adjacency};
use crate::model::ObservationMatrix;

/// One point of the TP-vs-FP step curve; tied scores collapse into a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Sweeps the threshold from high to low over the distinct score values of
/// the unordered pairs; both coordinates are nondecreasing.
pub fn roc_curve(scores: &DMatrix<f64>, truth: &Adjacency) -> RocCurve {
    let p = truth.node_count();
    assert_eq!(scores.nrows(), p);
    assert_eq!(scores.ncols(), p);

    let mut scored: Vec<(f64, bool)> = pairs(p)
        .map(|(i, j)| (scores[(i, j)], truth.has_edge(i, j)))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("scores must not be NaN"));

    let n_pos = truth.edge_count();
    let n_neg = pair_count(p) - n_pos;
    let mut points = Vec::new();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut k = 0usize;
    while k < scored.len() {
        let threshold = scored[k].0;
        while k < scored.len() && scored[k].0 == threshold {
            if scored[k].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push(RocPoint { threshold, tp, fp });
    }
    RocCurve {
        points,
        n_pos,
        n_neg,
    }
}

/// Trapezoidal area of the TP-vs-FP polyline on `[0, fp_max]`, normalized by
/// `n_pos * fp_max`. The polyline starts at the origin; past its last point
/// it continues flat at the final TP level.
pub fn partial_auc(curve: &RocCurve, fp_max: f64) -> f64 {
    assert!(fp_max > 0.0, "fp_max must be positive");
    if curve.n_pos == 0 {
        return 0.0;
    }
    let mut area = 0.0;
    let mut prev_fp = 0.0;
    let mut prev_tp = 0.0;
    for pt in &curve.points {
        let (x, y) = (pt.fp as f64, pt.tp as f64);
        if x <= prev_fp {
            // vertical move: no horizontal extent, no area
            prev_tp = y;
            prev_fp = x;
            continue;
        }
        let clip = x.min(fp_max);
        if clip > prev_fp {
            // linear interpolation up to the clip point
            let t = (clip - prev_fp) / (x - prev_fp);
            let y_clip = prev_tp + t * (y - prev_tp);
            area += 0.5 * (prev_tp + y_clip) * (clip - prev_fp);
        }
        prev_fp = x;
        prev_tp = y;
        if x >= fp_max {
            break;
        }
    }
    if prev_fp < fp_max {
        area += prev_tp * (fp_max - prev_fp);
    }
    area / (curve.n_pos as f64 * fp_max)
}

/// Full-range area: partial AUC with the cap at the negative count. This is
/// the usual ROC AUC.
pub fn auc(curve: &RocCurve) -> f64 {
    if curve.n_neg == 0 {
        return 0.0;
    }
    partial_auc(curve, curve.n_neg as f64)
}

/// The `k` highest-scoring unordered pairs; ties break lexicographically on
/// `(i, j)`.
pub fn top_k_edges(scores: &DMatrix<f64>, k: usize) -> Result<Vec<(usize, usize)>> {
    let p = scores.nrows();
    if k > pair_count(p) {
        return Err(Error::InvalidConfig(format!(
            "k = {k} exceeds the {} unordered pairs",
            pair_count(p)
        )));
    }
    let mut all: Vec<((usize, usize), f64)> =
        pairs(p).map(|(i, j)| ((i, j), scores[(i, j)])).collect();
    all.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("NaN score")
            .then(a.0.cmp(&b.0))
    });
    Ok(all.into_iter().take(k).map(|(e, _)| e).collect())
}

/// Constrained Gaussian MLE of the precision matrix over a fixed support,
/// by cycling modified regressions over the nodes. At convergence the
/// inverse of the estimate matches `S` on the support and the diagonal, and
/// the estimate is exactly zero off the support.
pub fn fit_precision_given_structure(
    s: &DMatrix<f64>,
    structure: &Adjacency,
    tol: f64,
    max_iter: usize,
) -> Result<DMatrix<f64>> {
    let p = s.nrows();
    assert_eq!(structure.node_count(), p);
    let mut w = s.clone();
    let mut betas: Vec<DVector<f64>> = vec![DVector::zeros(p - 1); p];
    let others: Vec<Vec<usize>> = (0..p)
        .map(|j| (0..p).filter(|&i| i != j).collect())
        .collect();

    let mut residual = f64::INFINITY;
    for _pass in 0..max_iter {
        for j in 0..p {
            let neighbors: Vec<usize> = others[j]
                .iter()
                .copied()
                .filter(|&i| structure.has_edge(i, j))
                .collect();
            let mut beta_full = DVector::zeros(p - 1);
            if !neighbors.is_empty() {
                let m = neighbors.len();
                let mut w11 = DMatrix::zeros(m, m);
                let mut s12 = DVector::zeros(m);
                for (a, &ia) in neighbors.iter().enumerate() {
                    s12[a] = s[(ia, j)];
                    for (b, &ib) in neighbors.iter().enumerate() {
                        w11[(a, b)] = w[(ia, ib)];
                    }
                }
                let chol = Cholesky::new(w11).ok_or(Error::SingularCovariance { node: j })?;
                let beta_star = chol.solve(&s12);
                for (a, &ia) in neighbors.iter().enumerate() {
                    let pos = others[j].iter().position(|&x| x == ia).unwrap();
                    beta_full[pos] = beta_star[a];
                }
            }
            // w12 = W11 * beta over the full complement
            for &i in &others[j] {
                let mut v = 0.0;
                for (col_pos, &k) in others[j].iter().enumerate() {
                    v += w[(i, k)] * beta_full[col_pos];
                }
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
            betas[j] = beta_full;
        }

        let theta = recover_theta(s, &w, &betas, &others)?;
        residual = stationarity_residual(s, &theta, structure);
        if residual <= tol {
            return Ok(theta);
        }
    }
    Err(Error::NonConvergence { max_iter, residual })
}

fn recover_theta(
    s: &DMatrix<f64>,
    w: &DMatrix<f64>,
    betas: &[DVector<f64>],
    others: &[Vec<usize>],
) -> Result<DMatrix<f64>> {
    let p = s.nrows();
    let mut theta = DMatrix::zeros(p, p);
    for j in 0..p {
        let mut w12_beta = 0.0;
        for (pos, &i) in others[j].iter().enumerate() {
            w12_beta += w[(i, j)] * betas[j][pos];
        }
        let denom = s[(j, j)] - w12_beta;
        if !(denom > 0.0) {
            return Err(Error::SingularCovariance { node: j });
        }
        let t_jj = 1.0 / denom;
        theta[(j, j)] = t_jj;
        for (pos, &i) in others[j].iter().enumerate() {
            if betas[j][pos] != 0.0 {
                theta[(i, j)] = -betas[j][pos] * t_jj;
            }
        }
    }
    // symmetrize the two node-wise estimates of each off-diagonal entry
    for (i, j) in pairs(p) {
        let v = 0.5 * (theta[(i, j)] + theta[(j, i)]);
        theta[(i, j)] = v;
        theta[(j, i)] = v;
    }
    Ok(theta)
}

/// Max-norm violation of the moment conditions: `(theta^-1)_ij = s_ij` on
/// the support and the diagonal.
fn stationarity_residual(s: &DMatrix<f64>, theta: &DMatrix<f64>, structure: &Adjacency) -> f64 {
    let p = s.nrows();
    let Some(sigma) = theta.clone().try_inverse() else {
        return f64::INFINITY;
    };
    let mut worst: f64 = 0.0;
    for i in 0..p {
        worst = worst.max((sigma[(i, i)] - s[(i, i)]).abs());
    }
    for (i, j) in pairs(p) {
        if structure.has_edge(i, j) {
            worst = worst.max((sigma[(i, j)] - s[(i, j)]).abs());
        }
    }
    worst
}

/// Gaussian log-likelihood of centered data under precision `theta`,
/// using the sample covariance `S = X'X / n`.
pub fn gaussian_loglik(n: usize, s: &DMatrix<f64>, theta: &DMatrix<f64>) -> Result<f64> {
    let p = s.nrows() as f64;
    let chol = Cholesky::new(theta.clone()).ok_or(Error::SingularCovariance { node: 0 })?;
    let logdet = chol.ln_determinant();
    let trace = (s * theta).trace();
    Ok(0.5 * n as f64 * (logdet - trace - p * (2.0 * std::f64::consts::PI).ln()))
}

/// Outcome of one candidate threshold inside [`bic_select`].
#[derive(Debug, Clone)]
pub struct ThresholdOutcome {
    pub threshold: f64,
    pub n_edges: usize,
    pub bic: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BicSelection {
    pub threshold: f64,
    pub structure: Adjacency,
    pub theta: DMatrix<f64>,
    pub bic: f64,
    pub outcomes: Vec<ThresholdOutcome>,
}

/// Thresholds the scores, refits the precision matrix on each candidate
/// support, and keeps the BIC minimizer (ties favor the sparser model).
/// The parameter count is the edge count plus the `p` diagonal entries.
pub fn bic_select(
    x: &ObservationMatrix,
    scores: &DMatrix<f64>,
    threshold_grid: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<BicSelection> {
    if threshold_grid.is_empty() {
        return Err(Error::InvalidConfig("empty threshold grid".into()));
    }
    let n = x.n();
    let p = x.p();
    let xv = x.values();
    let s = xv.tr_mul(xv) / n as f64;

    let mut outcomes = Vec::with_capacity(threshold_grid.len());
    let mut best: Option<(f64, Adjacency, DMatrix<f64>, f64)> = None;
    for &threshold in threshold_grid {
        let mut structure = Adjacency::empty(p);
        for (i, j) in pairs(p) {
            if scores[(i, j)] >= threshold {
                structure.set(i, j, true);
            }
        }
        let n_edges = structure.edge_count();
        match fit_precision_given_structure(&s, &structure, tol, max_iter) {
            Ok(theta) => {
                let loglik = gaussian_loglik(n, &s, &theta)?;
                let bic = -2.0 * loglik + (n as f64).ln() * (n_edges + p) as f64;
                outcomes.push(ThresholdOutcome {
                    threshold,
                    n_edges,
                    bic: Some(bic),
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some((_, bg, _, bb)) => bic < *bb || (bic == *bb && n_edges < bg.edge_count()),
                };
                if better {
                    best = Some((threshold, structure, theta, bic));
                }
            }
            Err(e) => outcomes.push(ThresholdOutcome {
                threshold,
                n_edges,
                bic: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let (threshold, structure, theta, bic) =
        best.ok_or_else(|| Error::InvalidConfig("every threshold failed to refit".into()))?;
    Ok(BicSelection {
        threshold,
        structure,
        theta,
        bic,
        outcomes,
    })
}

/// Default threshold grid: the distinct observed scores, subsampled to at
/// most `cap` values.
pub fn default_threshold_grid(scores: &DMatrix<f64>, cap: usize) -> Vec<f64> {
    let p = scores.nrows();
    let mut values: Vec<f64> = pairs(p).map(|(i, j)| scores[(i, j)]).collect();
    values.sort_by(|a, b| a.partial_cmp(b).expect("NaN score"));
    values.dedup();
    if values.len() > cap && cap > 0 {
        let step = values.len() as f64 / cap as f64;
        values = (0..cap)
            .map(|k| values[(k as f64 * step) as usize])
            .collect();
        values.dedup();
    }
    values
}
