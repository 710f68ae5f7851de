//! Planted conditional benchmark: Gaussian inputs and binary outputs drawn
//! from a chain of logistic factors, so outputs depend on the inputs and on
//! each other. Half of the outputs are sharply determined, the rest are noisy.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{seeded_rng, Dataset};
use crate::error::Result;
use crate::optim::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub seed: u64,
    /// Scale of input coefficients for sharply determined outputs.
    pub strong_scale: f64,
    /// Scale of input coefficients for noisy outputs.
    pub weak_scale: f64,
    /// Coefficient magnitude linking an output to its predecessor.
    pub coupling: f64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            n: 2000,
            m: 10,
            d: 8,
            seed: 2024,
            strong_scale: 1.5,
            weak_scale: 0.15,
            coupling: 4.0,
        }
    }
}

/// Generating parameters: output `i` has input weights `input_weights[i]`,
/// weights on earlier outputs `output_weights[i]` (length `i`) and an intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedModel {
    pub input_weights: Vec<Vec<f64>>,
    pub output_weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
}

impl PlantedModel {
    pub fn draw(spec: &PlantedSpec) -> Self {
        let mut rng = seeded_rng(spec.seed);
        let mut input_weights = Vec::with_capacity(spec.d);
        let mut output_weights = Vec::with_capacity(spec.d);
        let mut intercepts = Vec::with_capacity(spec.d);
        for i in 0..spec.d {
            let strong = i % 2 == 0;
            let scale = if strong { spec.strong_scale } else { spec.weak_scale };
            let a: Vec<f64> = (0..spec.m)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let mut c = vec![0.0; i];
            let mut b = 0.0;
            if i > 0 {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                c[i - 1] = sign * spec.coupling;
                b -= 0.5 * c[i - 1];
            }
            input_weights.push(a);
            output_weights.push(c);
            intercepts.push(b);
        }
        Self {
            input_weights,
            output_weights,
            intercepts,
        }
    }

    /// P(y_i = 1 | x, y_1..y_{i-1}).
    pub fn prob(&self, i: usize, x: &[f64], y_prefix: &[u8]) -> f64 {
        let z = self.intercepts[i]
            + self.input_weights[i].iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
            + self.output_weights[i]
                .iter()
                .zip(y_prefix)
                .map(|(c, &y)| c * f64::from(y))
                .sum::<f64>();
        sigmoid(z)
    }
}

/// Samples the benchmark dataset and returns it with its generating model.
pub fn planted_benchmark(spec: &PlantedSpec) -> Result<(Dataset, PlantedModel)> {
    let model = PlantedModel::draw(spec);
    let mut rng = seeded_rng(spec.seed.wrapping_add(0x5eed));
    let mut x = Array2::<f64>::zeros((spec.n, spec.m));
    let mut y = Array2::<u8>::zeros((spec.n, spec.d));
    let mut xr = vec![0.0; spec.m];
    let mut yr = vec![0u8; spec.d];
    for n in 0..spec.n {
        for v in xr.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..spec.d {
            let p = model.prob(i, &xr, &yr[..i]);
            yr[i] = u8::from(rng.random::<f64>() < p);
        }
        x.row_mut(n).iter_mut().zip(&xr).for_each(|(a, b)| *a = *b);
        y.row_mut(n).iter_mut().zip(&yr).for_each(|(a, b)| *a = *b);
    }
    Ok((Dataset::from_arrays(x, y)?, model))
}
