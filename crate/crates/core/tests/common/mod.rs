//! Independent reference implementations used as test oracles. None of these
//! call into the library code paths they check.

#![allow(dead_code)]

use mcode::dataset::Dataset;
use mcode::model::{McodeModel, Mode};
use mcode::optim::Factor;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-12;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(n: usize, p: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_fn((n, p), |_| r.random_range(-3.0..3.0))
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn row(m: ArrayView2<'_, f64>, i: usize) -> Vec<f64> {
    m.row(i).to_vec()
}

/// k nearest indices of `q` by full sort on (distance, index).
pub fn brute_knn(points: ArrayView2<'_, f64>, q: &[f64], k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = (0..points.nrows())
        .map(|i| (euclid(&row(points, i), q), i))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

/// LOF straight from the textbook formulas with O(N^2) loops.
pub fn brute_lof(points: ArrayView2<'_, f64>, k: usize, floor: f64) -> Vec<f64> {
    let n = points.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| row(points, i)).collect();
    let table: Vec<f64> = (0..n * n).map(|ij| euclid(&rows[ij / n], &rows[ij % n])).collect();
    let dist = |a: usize, b: usize| table[a * n + b];
    let mut kdist = vec![0.0; n];
    let mut hood: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let mut ds: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist(i, j)).collect();
        ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        kdist[i] = ds[k - 1];
        hood[i] = (0..n).filter(|&j| j != i && dist(i, j) <= kdist[i]).collect();
    }
    let lrd: Vec<f64> = (0..n)
        .map(|i| {
            let s: f64 = hood[i]
                .iter()
                .map(|&o| f64::max(kdist[o], dist(i, o)).max(floor))
                .sum();
            hood[i].len() as f64 / s
        })
        .collect();
    (0..n)
        .map(|i| hood[i].iter().map(|&o| lrd[o] / lrd[i]).sum::<f64>() / hood[i].len() as f64)
        .collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// rho recomputed from the factor parameters with explicit loops.
pub fn direct_rho(model: &McodeModel, ds: &Dataset) -> Array2<f64> {
    let (n, m, d) = (ds.n_instances(), ds.n_inputs(), ds.n_outputs());
    let mut out = Array2::zeros((n, d));
    for r in 0..n {
        let xs: Vec<f64> = (0..m)
            .map(|c| (ds.x()[[r, c]] - model.stats.means[c]) / model.stats.std_devs[c])
            .collect();
        for i in 0..d {
            let mut feats = xs.clone();
            if model.mode == Mode::FullConditional {
                for j in 0..d {
                    if j != i {
                        feats.push(ds.y()[[r, j]] as f64);
                    }
                }
            }
            let p = match &model.factors[i] {
                Factor::Logistic(f) => {
                    let z: f64 = f.weights.iter().zip(&feats).map(|(w, x)| w * x).sum::<f64>() + f.intercept;
                    sigmoid(z)
                }
                Factor::Constant(c) => c.prob_one,
            };
            let p = p.clamp(EPS, 1.0 - EPS);
            let rho = if ds.y()[[r, i]] == 1 { p } else { 1.0 - p };
            out[[r, i]] = rho.clamp(EPS, 1.0 - EPS);
        }
    }
    out
}

/// Column-wise z-scores with population standard deviation.
pub fn zscore_columns(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = x.nrows() as f64;
    let mut out = x.to_owned();
    for mut col in out.columns_mut() {
        let mean = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        col.mapv_inplace(|v| (v - mean) / sd);
    }
    out
}

/// Local weights: sort all distances, keep self plus k-1 nearest, average errors.
pub fn brute_local_weights(rho: ArrayView2<'_, f64>, points: ArrayView2<'_, f64>, k: usize) -> Array2<f64> {
    let (n, d) = rho.dim();
    let mut w = Array2::zeros((n, d));
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (euclid(&row(points, i), &row(points, j)), j))
            .collect();
        others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut members = vec![i];
        members.extend(others.iter().take(k - 1).map(|&(_, j)| j));
        for c in 0..d {
            let mean_err = members.iter().map(|&j| 1.0 - rho[[j, c]]).sum::<f64>() / k as f64;
            w[[i, c]] = 1.0 / mean_err;
        }
    }
    w
}

pub fn brute_global_weights(rho: ArrayView2<'_, f64>) -> Vec<f64> {
    let n = rho.nrows() as f64;
    rho.columns()
        .into_iter()
        .map(|c| 1.0 / (c.iter().map(|r| 1.0 - r).sum::<f64>() / n))
        .collect()
}

/// `-sum_i w(n, i) ln rho(n, i)` for every instance.
pub fn brute_scores(rho: ArrayView2<'_, f64>, weight: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    (0..rho.nrows())
        .map(|n| -(0..rho.ncols()).map(|i| weight(n, i) * rho[[n, i]].ln()).sum::<f64>())
        .collect()
}

/// ATPAR by enumerating every alert count and recounting hits from scratch.
pub fn enumerate_atpar(scores: &[f64], outliers: &[usize], upper: f64) -> f64 {
    let n = scores.len();
    let top = ((upper * n as f64).round() as usize).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut total = 0.0;
    for a in 1..=top {
        let hits = order[..a].iter().filter(|i| outliers.contains(i)).count();
        total += hits as f64 / a as f64;
    }
    total / top as f64
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

/// Minimizes a 2-D function: a coarse grid on `f` locates the basin, then a
/// shrinking compass search on the squared norm of the analytic gradient
/// `grad` pins the stationary point (the objective itself is too flat there
/// to resolve the minimizer below about 1e-8).
pub fn grid_then_polish(
    f: impl Fn(f64, f64) -> f64,
    grad: impl Fn(f64, f64) -> (f64, f64),
    lo: f64,
    hi: f64,
    tol: f64,
) -> (f64, f64) {
    let steps = 200;
    let h = (hi - lo) / steps as f64;
    let mut best = (lo, lo, f64::INFINITY);
    for i in 0..=steps {
        for j in 0..=steps {
            let (a, b) = (lo + i as f64 * h, lo + j as f64 * h);
            let v = f(a, b);
            if v < best.2 {
                best = (a, b, v);
            }
        }
    }
    let g2 = |a: f64, b: f64| {
        let (ga, gb) = grad(a, b);
        ga * ga + gb * gb
    };
    let mut best = (best.0, best.1, g2(best.0, best.1));
    let mut step = h;
    while step > tol {
        let mut moved = false;
        for (da, db) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let v = g2(best.0 + da, best.1 + db);
            if v < best.2 {
                best = (best.0 + da, best.1 + db, v);
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (best.0, best.1)
}

/// Mean held-out log-likelihood per instance of lambda under explicit fold loops.
pub fn explicit_cv_score(
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    folds: &[usize],
    n_folds: usize,
    lambda: f64,
) -> f64 {
    let n = labels.len();
    let mut total = 0.0;
    for k in 0..n_folds {
        let train: Vec<usize> = (0..n).filter(|&i| folds[i] != k).collect();
        let test: Vec<usize> = (0..n).filter(|&i| folds[i] == k).collect();
        let xt = features.select(ndarray::Axis(0), &train);
        let yt: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
        let factor = mcode::optim::train_logistic(xt.view(), &yt, lambda).unwrap();
        for &i in &test {
            let p = match &factor {
                Factor::Logistic(f) => {
                    let z: f64 = f
                        .weights
                        .iter()
                        .zip(features.row(i).iter())
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
                        + f.intercept;
                    sigmoid(z).clamp(EPS, 1.0 - EPS)
                }
                Factor::Constant(c) => c.prob_one,
            };
            total += if labels[i] == 1 { p.ln() } else { (1.0 - p).ln() };
        }
    }
    total / n as f64
}
