//! L2-penalized logistic regression factors and cross-validated choice of
//! the penalty strength.

pub mod lbfgs;

use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::seeded_rng;
use crate::error::{McodeError, Result};
use crate::par;

pub use lbfgs::{LbfgsOptions, Minimum};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-12;

pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFactor {
    pub dim_index: usize,
    pub lambda: f64,
    pub intercept: f64,
    pub weights: Vec<f64>,
    pub converged: bool,
    pub final_gradient_norm: f64,
    pub iterations: usize,
}

impl LogisticFactor {
    pub fn feature_arity(&self) -> usize {
        self.weights.len()
    }

    pub fn linear_predictor(&self, features: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(features)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.intercept
    }
}

/// Fallback for labels that are constant in the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantFactor {
    pub dim_index: usize,
    pub prob_one: f64,
}

impl ConstantFactor {
    /// Laplace-corrected rate `(ones + 1) / (N + 2)`.
    pub fn from_labels(labels: &[u8]) -> Self {
        let ones = labels.iter().filter(|&&y| y == 1).count();
        Self {
            dim_index: 0,
            prob_one: (ones as f64 + 1.0) / (labels.len() as f64 + 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Factor {
    Logistic(LogisticFactor),
    Constant(ConstantFactor),
}

impl Factor {
    pub fn dim_index(&self) -> usize {
        match self {
            Factor::Logistic(f) => f.dim_index,
            Factor::Constant(f) => f.dim_index,
        }
    }

    pub fn set_dim_index(&mut self, dim: usize) {
        match self {
            Factor::Logistic(f) => f.dim_index = dim,
            Factor::Constant(f) => f.dim_index = dim,
        }
    }

    /// `None` for a constant factor, which accepts any feature vector.
    pub fn feature_arity(&self) -> Option<usize> {
        match self {
            Factor::Logistic(f) => Some(f.feature_arity()),
            Factor::Constant(_) => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Factor::Constant(_))
    }

    pub fn converged(&self) -> bool {
        match self {
            Factor::Logistic(f) => f.converged,
            Factor::Constant(_) => true,
        }
    }

    /// P(y = 1 | features), clamped away from 0 and 1.
    pub fn predict_prob(&self, features: &[f64]) -> Result<f64> {
        if let Some(p) = self.feature_arity() {
            if p != features.len() {
                return Err(McodeError::Domain(format!(
                    "factor expects {p} features, got {}",
                    features.len()
                )));
            }
        }
        Ok(self.prob(features))
    }

    pub(crate) fn prob(&self, features: &[f64]) -> f64 {
        match self {
            Factor::Logistic(f) => clamp_prob(sigmoid(f.linear_predictor(features))),
            Factor::Constant(f) => f.prob_one,
        }
    }
}

pub fn predict_prob(factor: &Factor, features: &[f64]) -> Result<f64> {
    factor.predict_prob(features)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Penalized negative log-likelihood
/// `sum_n [ln(1 + e^{z_n}) - y_n z_n] + lambda/2 * |w|^2`, `z_n = w.x_n + b`,
/// over the parameter vector `[w_1..w_p, b]`. The intercept is not penalized.
#[derive(Debug, Clone, Copy)]
pub struct PenalizedLogistic<'a> {
    features: ArrayView2<'a, f64>,
    labels: &'a [u8],
    lambda: f64,
}

impl<'a> PenalizedLogistic<'a> {
    pub fn new(features: ArrayView2<'a, f64>, labels: &'a [u8], lambda: f64) -> Result<Self> {
        validate_problem(features, labels, lambda)?;
        Ok(Self {
            features,
            labels,
            lambda,
        })
    }

    pub fn n_params(&self) -> usize {
        self.features.ncols() + 1
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        let mut scratch = vec![0.0; params.len()];
        self.value_and_gradient(params, &mut scratch)
    }

    pub fn value_and_gradient(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.features.ncols();
        let (w, b) = params.split_at(p);
        let b = b[0];
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (row, &y) in self.features.axis_iter(Axis(0)).zip(self.labels) {
            let z = dot_row(row, w) + b;
            let y = f64::from(y);
            loss += softplus(z) - y * z;
            let r = sigmoid(z) - y;
            for (g, x) in grad[..p].iter_mut().zip(row.iter()) {
                *g += r * x;
            }
            grad[p] += r;
        }
        let mut penalty = 0.0;
        for (g, wi) in grad[..p].iter_mut().zip(w) {
            *g += self.lambda * wi;
            penalty += wi * wi;
        }
        loss + 0.5 * self.lambda * penalty
    }
}

impl lbfgs::Objective for PenalizedLogistic<'_> {
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        PenalizedLogistic::value_and_gradient(self, x, grad)
    }

    /// Sums per-instance changes `softplus(z') - softplus(z) - y (z' - z)`,
    /// each evaluated as `ln_1p(sigmoid(z) * expm1(z' - z))`, so the result
    /// keeps relative accuracy even when it is tiny compared with `f`.
    fn change(&self, from: &[f64], _f_from: f64, to: &[f64], _f_to: f64) -> f64 {
        let p = self.features.ncols();
        let (w0, b0) = (&from[..p], from[p]);
        let (w1, b1) = (&to[..p], to[p]);
        let mut delta = 0.0;
        for (row, &y) in self.features.axis_iter(Axis(0)).zip(self.labels) {
            let z0 = dot_row(row, w0) + b0;
            let dz = row
                .iter()
                .zip(w1.iter().zip(w0))
                .map(|(x, (a, b))| x * (a - b))
                .sum::<f64>()
                + (b1 - b0);
            delta += softplus_change(z0, dz) - f64::from(y) * dz;
        }
        let penalty: f64 = w1.iter().zip(w0).map(|(a, b)| (a - b) * (a + b)).sum();
        delta + 0.5 * self.lambda * penalty
    }
}

/// `softplus(z + dz) - softplus(z)`.
fn softplus_change(z: f64, dz: f64) -> f64 {
    let t = sigmoid(z) * dz.exp_m1();
    if t.is_finite() {
        t.ln_1p()
    } else {
        softplus(z + dz) - softplus(z)
    }
}

fn dot_row(row: ArrayView1<'_, f64>, w: &[f64]) -> f64 {
    row.iter().zip(w).map(|(x, w)| x * w).sum()
}

fn validate_problem(features: ArrayView2<'_, f64>, labels: &[u8], lambda: f64) -> Result<()> {
    if features.nrows() == 0 {
        return Err(McodeError::Domain("training set is empty".into()));
    }
    if features.nrows() != labels.len() {
        return Err(McodeError::Domain(format!(
            "{} feature rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(McodeError::Domain(format!(
            "lambda must be finite and non-negative, got {lambda}"
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(McodeError::Domain("non-finite feature value".into()));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(McodeError::Domain("labels must be 0/1".into()));
    }
    Ok(())
}

/// Trains one factor from the zero start point with default optimizer settings.
pub fn train_logistic(features: ArrayView2<'_, f64>, labels: &[u8], lambda: f64) -> Result<Factor> {
    train_logistic_with(features, labels, lambda, None, &LbfgsOptions::default())
        .map(|(factor, _)| factor)
}

/// Trains one factor. Constant labels yield a [`ConstantFactor`]; otherwise
/// the penalized objective is minimized from `init` (or zero), and the
/// optimizer's report is returned alongside the factor.
pub fn train_logistic_with(
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    lambda: f64,
    init: Option<&[f64]>,
    opts: &LbfgsOptions,
) -> Result<(Factor, Option<Minimum>)> {
    let problem = PenalizedLogistic::new(features, labels, lambda)?;
    let first = labels[0];
    if labels.iter().all(|&y| y == first) {
        return Ok((Factor::Constant(ConstantFactor::from_labels(labels)), None));
    }
    let start = match init {
        Some(x) if x.len() == problem.n_params() => x.to_vec(),
        Some(x) => {
            return Err(McodeError::Domain(format!(
                "initial point has {} entries, expected {}",
                x.len(),
                problem.n_params()
            )))
        }
        None => vec![0.0; problem.n_params()],
    };
    let min = lbfgs::minimize(&problem, start, opts);
    if !min.value.is_finite() || min.x.iter().any(|v| !v.is_finite()) {
        return Err(McodeError::Numerical(
            "logistic training diverged to a non-finite objective".into(),
        ));
    }
    let p = features.ncols();
    let factor = LogisticFactor {
        dim_index: 0,
        lambda,
        intercept: min.x[p],
        weights: min.x[..p].to_vec(),
        converged: min.converged,
        final_gradient_norm: min.gradient_norm,
        iterations: min.iterations,
    };
    Ok((Factor::Logistic(factor), Some(min)))
}

/// Sum of `ln P(observed label)` under the factor, with clamped probabilities.
pub fn log_likelihood(factor: &Factor, features: ArrayView2<'_, f64>, labels: &[u8]) -> f64 {
    let mut buf = Vec::with_capacity(features.ncols());
    features
        .axis_iter(Axis(0))
        .zip(labels)
        .map(|(row, &y)| {
            buf.clear();
            buf.extend(row.iter().copied());
            let p = factor.prob(&buf);
            if y == 1 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum()
}

/// Seeded random partition: instance `n` belongs to fold `assignment[n]`.
pub fn fold_assignment(n: usize, n_folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed));
    let mut folds = vec![0; n];
    for (pos, &idx) in order.iter().enumerate() {
        folds[idx] = pos % n_folds;
    }
    folds
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub lambda: f64,
    /// Mean held-out log-likelihood per instance, one entry per grid value.
    pub scores: Vec<f64>,
    pub trainings: usize,
}

/// Picks the grid value with the highest mean held-out log-likelihood.
/// Exact ties go to the larger lambda.
pub fn cross_validate(
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    lambda_grid: &[f64],
    n_folds: usize,
    seed: u64,
) -> Result<CvReport> {
    if lambda_grid.is_empty() {
        return Err(McodeError::Config("lambda grid is empty".into()));
    }
    if n_folds < 2 {
        return Err(McodeError::Config(format!(
            "cross-validation needs at least 2 folds, got {n_folds}"
        )));
    }
    if let Some(bad) = lambda_grid.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(McodeError::Config(format!("invalid lambda {bad} in grid")));
    }
    validate_problem(features, labels, 0.0)?;
    let n = labels.len();
    if n_folds > n {
        return Err(McodeError::Config(format!(
            "{n_folds} folds requested for {n} instances"
        )));
    }

    let folds = fold_assignment(n, n_folds, seed);
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..n_folds)
        .map(|k| (0..n).partition(|&i| folds[i] != k))
        .collect();

    let jobs = lambda_grid.len() * n_folds;
    let held_out = par::try_map_range(jobs, |job| -> Result<f64> {
        let (g, k) = (job / n_folds, job % n_folds);
        let (train, test) = &splits[k];
        let xf = features.select(Axis(0), train);
        let yf: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
        let factor = train_logistic(xf.view(), &yf, lambda_grid[g])?;
        let xt = features.select(Axis(0), test);
        let yt: Vec<u8> = test.iter().map(|&i| labels[i]).collect();
        Ok(log_likelihood(&factor, xt.view(), &yt))
    })?;

    let scores: Vec<f64> = held_out
        .chunks(n_folds)
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect();
    let mut best = 0;
    for g in 1..lambda_grid.len() {
        let better = scores[g] > scores[best]
            || (scores[g] == scores[best] && lambda_grid[g] > lambda_grid[best]);
        if better {
            best = g;
        }
    }
    Ok(CvReport {
        lambda: lambda_grid[best],
        scores,
        trainings: jobs,
    })
}

pub fn cross_validate_lambda(
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    lambda_grid: &[f64],
    n_folds: usize,
    seed: u64,
) -> Result<f64> {
    cross_validate(features, labels, lambda_grid, n_folds, seed).map(|r| r.lambda)
}
