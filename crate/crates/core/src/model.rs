//! The decomposed conditional model: one logistic factor per output
//! dimension, conditioned on the inputs and (in full-conditional mode) on all
//! remaining outputs. Maps instances to per-dimension probabilities of their
//! observed outputs.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::{standardize, Dataset, StandardizationStats};
use crate::error::{McodeError, Result};
use crate::optim::{self, clamp_prob, Factor, PROB_CLAMP};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Factor i conditions on `x` and every output except `y_i`.
    FullConditional,
    /// Factor i conditions on `x` only.
    Independent,
}

impl Mode {
    pub fn feature_arity(self, m: usize, d: usize) -> usize {
        match self {
            Mode::FullConditional => m + d - 1,
            Mode::Independent => m,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FullConditional => "full_conditional",
            Mode::Independent => "independent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum LambdaPolicy {
    Fixed { lambda: f64 },
    CrossValidated { grid: Vec<f64>, folds: usize, seed: u64 },
}

impl Default for LambdaPolicy {
    fn default() -> Self {
        LambdaPolicy::CrossValidated {
            grid: optim::DEFAULT_LAMBDA_GRID.to_vec(),
            folds: optim::DEFAULT_FOLDS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McodeModel {
    pub mode: Mode,
    pub m: usize,
    pub d: usize,
    pub stats: StandardizationStats,
    pub factors: Vec<Factor>,
    pub lambdas: Vec<f64>,
    /// Number of factor trainings performed during the fit, CV folds included.
    pub trainings: usize,
}

impl McodeModel {
    pub fn feature_arity(&self) -> usize {
        self.mode.feature_arity(self.m, self.d)
    }

    /// Writes factor `dim`'s feature row for an already standardized input.
    fn feature_row(&self, x_std: &[f64], y: ArrayView1<'_, u8>, dim: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(x_std);
        if self.mode == Mode::FullConditional {
            out.extend(
                y.iter()
                    .enumerate()
                    .filter(|&(j, _)| j != dim)
                    .map(|(_, &v)| f64::from(v)),
            );
        }
    }

    /// rho for one instance given its raw input row and output row.
    pub fn rho_row(&self, x: ArrayView1<'_, f64>, y: ArrayView1<'_, u8>) -> Result<Vec<f64>> {
        if x.len() != self.m || y.len() != self.d {
            return Err(McodeError::Domain(format!(
                "instance has m={}, d={} but the model expects m={}, d={}",
                x.len(),
                y.len(),
                self.m,
                self.d
            )));
        }
        let mut x_std = vec![0.0; self.m];
        self.stats.apply_row(x, &mut x_std);
        let mut buf = Vec::with_capacity(self.feature_arity());
        Ok(self
            .factors
            .iter()
            .enumerate()
            .map(|(i, factor)| {
                self.feature_row(&x_std, y, i, &mut buf);
                let p = factor.prob(&buf);
                clamp_prob(if y[i] == 1 { p } else { 1.0 - p })
            })
            .collect())
    }
}

/// Feature matrix of factor `dim` over standardized inputs.
pub fn factor_features(x_std: ArrayView2<'_, f64>, y: ArrayView2<'_, u8>, mode: Mode, dim: usize) -> Array2<f64> {
    let (n, m) = x_std.dim();
    let p = mode.feature_arity(m, y.ncols());
    Array2::from_shape_fn((n, p), |(r, c)| {
        if c < m {
            x_std[[r, c]]
        } else {
            let j = c - m;
            let j = if j >= dim { j + 1 } else { j };
            f64::from(y[[r, j]])
        }
    })
}

/// Standardizes the inputs, then trains the d factors (concurrently when the
/// `parallel` feature is on).
pub fn fit_mcode(ds: &Dataset, mode: Mode, policy: &LambdaPolicy) -> Result<McodeModel> {
    let d = ds.n_outputs();
    if mode == Mode::FullConditional && d < 2 {
        return Err(McodeError::Config(format!(
            "full-conditional mode needs at least 2 outputs, dataset has {d}"
        )));
    }
    if let LambdaPolicy::Fixed { lambda } = policy {
        if !(lambda.is_finite() && *lambda >= 0.0) {
            return Err(McodeError::Config(format!("invalid lambda {lambda}")));
        }
    }
    let (std_ds, stats) = standardize(ds);

    let fitted = par::try_map_range(d, |i| -> Result<(Factor, f64, usize)> {
        let features = factor_features(std_ds.x(), std_ds.y(), mode, i);
        let labels: Vec<u8> = std_ds.y().column(i).to_vec();
        let fit = || -> Result<(Factor, f64, usize)> {
            let (lambda, cv_trainings) = match policy {
                LambdaPolicy::Fixed { lambda } => (*lambda, 0),
                LambdaPolicy::CrossValidated { grid, folds, seed } => {
                    let r = optim::cross_validate(features.view(), &labels, grid, *folds, *seed)?;
                    (r.lambda, r.trainings)
                }
            };
            let mut factor = optim::train_logistic(features.view(), &labels, lambda)?;
            factor.set_dim_index(i);
            Ok((factor, lambda, cv_trainings + 1))
        };
        fit().map_err(|e| e.in_dimension(i))
    })?;

    let mut factors = Vec::with_capacity(d);
    let mut lambdas = Vec::with_capacity(d);
    let mut trainings = 0;
    for (f, l, t) in fitted {
        factors.push(f);
        lambdas.push(l);
        trainings += t;
    }
    Ok(McodeModel {
        mode,
        m: ds.n_inputs(),
        d,
        stats,
        factors,
        lambdas,
        trainings,
    })
}

/// N x d matrix of probabilities assigned to the observed output values.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoMatrix {
    values: Array2<f64>,
}

impl RhoMatrix {
    /// Accepts entries in (0, 1] and clamps them into `[eps, 1 - eps]`.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(McodeError::Domain("rho matrix is empty".into()));
        }
        if let Some(((r, c), v)) = values
            .indexed_iter()
            .find(|(_, v)| !(**v > 0.0 && **v <= 1.0))
        {
            return Err(McodeError::Domain(format!(
                "rho entry ({r}, {c}) = {v} is outside (0, 1]"
            )));
        }
        Ok(Self {
            values: values.mapv(clamp_prob),
        })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn n_instances(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, n: usize) -> ArrayView1<'_, f64> {
        self.values.row(n)
    }

    /// Estimated errors `1 - rho`.
    pub fn errors(&self) -> Array2<f64> {
        self.values.mapv(|r| 1.0 - r)
    }
}

/// Applies the model to every instance of `ds` (raw inputs; standardization
/// with the model's statistics happens here).
pub fn estimate_rho(model: &McodeModel, ds: &Dataset) -> Result<RhoMatrix> {
    if ds.n_inputs() != model.m || ds.n_outputs() != model.d {
        return Err(McodeError::Domain(format!(
            "dataset has m={}, d={} but the model expects m={}, d={}",
            ds.n_inputs(),
            ds.n_outputs(),
            model.m,
            model.d
        )));
    }
    let n = ds.n_instances();
    let d = model.d;
    let mut values = vec![0.0; n * d];
    par::for_each_chunk(&mut values, d, |r, out| {
        let row = model
            .rho_row(ds.x_row(r), ds.y_row(r))
            .expect("shapes checked above");
        out.copy_from_slice(&row);
    });
    let values = Array2::from_shape_vec((n, d), values).expect("n x d buffer");
    Ok(RhoMatrix { values })
}

/// Pseudo-conditional joint probability: product of one row of rho.
pub fn pseudo_joint(rho_row: &[f64]) -> f64 {
    rho_row.iter().product()
}

/// Smallest value a clamped rho entry can take.
pub const RHO_FLOOR: f64 = PROB_CLAMP;
