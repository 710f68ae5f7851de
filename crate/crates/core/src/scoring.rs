//! Reliability weights over the rho space and the three model-based outlier
//! scores (plain product, globally weighted, locally weighted), plus the exact
//! k-nearest-neighbor index shared with the LOF baseline.

use std::cmp::Ordering;
use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{McodeError, Result};
use crate::model::RhoMatrix;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ScoreMethod {
    Prod,
    Rw,
    Lrw,
    Lof,
}

impl fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreMethod::Prod => "PROD",
            ScoreMethod::Rw => "RW",
            ScoreMethod::Lrw => "LRW",
            ScoreMethod::Lof => "LOF",
        })
    }
}

/// Per-instance outlier scores; larger means more outlying.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
    pub method: ScoreMethod,
}

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Instance indices by descending score, ties by ascending index.
    pub fn ranking(&self) -> Vec<usize> {
        rank_descending(&self.scores)
    }
}

pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Global reliability weights, one per output dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub w: Vec<f64>,
}

/// Per-instance reliability weights over a k-neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalWeightMatrix {
    pub w: Array2<f64>,
    pub k: usize,
}

/// `w_i = N / sum_n (1 - rho_i^(n))`.
pub fn global_weights(rho: &RhoMatrix) -> WeightVector {
    let v = rho.values();
    let n = v.nrows() as f64;
    let w = v
        .columns()
        .into_iter()
        .map(|col| {
            let mut err = 0.0;
            for r in col.iter() {
                err += 1.0 - r;
            }
            n / err
        })
        .collect();
    WeightVector { w }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Exact Euclidean k-NN over a fixed reference set. Results come in
/// non-decreasing distance order with ties broken by ascending index.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: Array2<f64>,
}

pub const EUCLIDEAN: &str = "euclidean";

fn squared_distance(a: ArrayView1<'_, f64>, b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let t = x - y;
            t * t
        })
        .sum()
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

pub fn build_neighbor_index(points: ArrayView2<'_, f64>) -> Result<NeighborIndex> {
    NeighborIndex::new(points.to_owned())
}

impl NeighborIndex {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        if points.iter().any(|v| !v.is_finite()) {
            return Err(McodeError::Domain("non-finite point coordinate".into()));
        }
        Ok(Self {
            points: points.as_standard_layout().into_owned(),
        })
    }

    pub fn metric(&self) -> &'static str {
        EUCLIDEAN
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    fn nearest(&self, point: &[f64], k: usize, skip: Option<usize>) -> Vec<Neighbor> {
        let mut cand: Vec<(f64, usize)> = self
            .points
            .rows()
            .into_iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .map(|(i, row)| (squared_distance(row, point), i))
            .collect();
        if k < cand.len() && k > 0 {
            cand.select_nth_unstable_by(k - 1, by_distance_then_index);
        }
        cand.truncate(k);
        cand.sort_unstable_by(by_distance_then_index);
        cand.into_iter()
            .map(|(d2, index)| Neighbor {
                index,
                distance: d2.sqrt(),
            })
            .collect()
    }

    /// The `k` reference points closest to `point`.
    pub fn query(&self, point: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        if point.len() != self.dim() {
            return Err(McodeError::Domain(format!(
                "query has {} coordinates, index has {}",
                point.len(),
                self.dim()
            )));
        }
        if k > self.len() {
            return Err(McodeError::Domain(format!(
                "k = {k} exceeds the {} indexed points",
                self.len()
            )));
        }
        Ok(self.nearest(point, k, None))
    }

    /// Neighborhood of indexed point `n`. With `include_self` the result is
    /// `n` followed by its `k - 1` nearest other points; otherwise the `k`
    /// nearest other points.
    pub fn query_instance(&self, n: usize, k: usize, include_self: bool) -> Result<Vec<Neighbor>> {
        let available = if include_self { self.len() } else { self.len().saturating_sub(1) };
        if n >= self.len() {
            return Err(McodeError::Domain(format!("instance {n} is not indexed")));
        }
        if k > available {
            return Err(McodeError::Domain(format!(
                "k = {k} exceeds the {available} available neighbors"
            )));
        }
        let point = self.points.row(n).to_vec();
        if include_self {
            if k == 0 {
                return Ok(Vec::new());
            }
            let mut out = Vec::with_capacity(k);
            out.push(Neighbor {
                index: n,
                distance: 0.0,
            });
            out.extend(self.nearest(&point, k - 1, Some(n)));
            Ok(out)
        } else {
            Ok(self.nearest(&point, k, Some(n)))
        }
    }
}

/// `w_i^(n) = k / sum_{n' in N_k(n)} (1 - rho_i^(n'))`, where `N_k(n)` holds
/// `n` itself and its `k - 1` nearest neighbors in the index. Errors are summed
/// in ascending instance order, so `k = N` reproduces [`global_weights`]
/// exactly.
pub fn local_weights(rho: &RhoMatrix, index: &NeighborIndex, k: usize) -> Result<LocalWeightMatrix> {
    let n = rho.n_instances();
    let d = rho.n_outputs();
    if index.len() != n {
        return Err(McodeError::Domain(format!(
            "index holds {} points but rho has {n} rows",
            index.len()
        )));
    }
    if k == 0 || k > n {
        return Err(McodeError::Domain(format!("k = {k} outside 1..={n}")));
    }
    let values = rho.values();
    let mut w = vec![0.0; n * d];
    par::for_each_chunk(&mut w, d, |row, out| {
        let mut members: Vec<usize> = index
            .query_instance(row, k, true)
            .expect("k validated")
            .into_iter()
            .map(|nb| nb.index)
            .collect();
        members.sort_unstable();
        for (i, o) in out.iter_mut().enumerate() {
            let mut err = 0.0;
            for &m in &members {
                err += 1.0 - values[[m, i]];
            }
            *o = k as f64 / err;
        }
    });
    Ok(LocalWeightMatrix {
        w: Array2::from_shape_vec((n, d), w).expect("n x d buffer"),
        k,
    })
}

fn weighted_neg_log(row: ArrayView1<'_, f64>, weights: impl Iterator<Item = f64>) -> f64 {
    let mut s = 0.0;
    for (r, w) in row.iter().zip(weights) {
        s += w * r.ln();
    }
    -s
}

/// `-sum_i ln rho_i`.
pub fn score_prod(rho: &RhoMatrix) -> ScoreVector {
    let v = rho.values();
    let scores = par::map_range(v.nrows(), |n| {
        weighted_neg_log(v.row(n), std::iter::repeat(1.0))
    });
    ScoreVector {
        scores,
        method: ScoreMethod::Prod,
    }
}

/// `-sum_i w_i ln rho_i`.
pub fn score_rw(rho: &RhoMatrix, weights: &WeightVector) -> Result<ScoreVector> {
    let v = rho.values();
    if weights.w.len() != v.ncols() {
        return Err(McodeError::Domain(format!(
            "{} weights for {} output dimensions",
            weights.w.len(),
            v.ncols()
        )));
    }
    let scores = par::map_range(v.nrows(), |n| {
        weighted_neg_log(v.row(n), weights.w.iter().copied())
    });
    Ok(ScoreVector {
        scores,
        method: ScoreMethod::Rw,
    })
}

/// `-sum_i w_i^(n) ln rho_i^(n)`.
pub fn score_lrw(rho: &RhoMatrix, local: &LocalWeightMatrix) -> Result<ScoreVector> {
    let v = rho.values();
    if local.w.dim() != v.dim() {
        return Err(McodeError::Domain(format!(
            "local weights are {:?} but rho is {:?}",
            local.w.dim(),
            v.dim()
        )));
    }
    let scores = par::map_range(v.nrows(), |n| {
        weighted_neg_log(v.row(n), local.w.row(n).iter().copied())
    });
    Ok(ScoreVector {
        scores,
        method: ScoreMethod::Lrw,
    })
}

/// Mean squared estimated error per dimension, `(1/N) sum_n (1 - rho)^2`.
/// Diagnostic only.
pub fn brier_per_dimension(rho: &RhoMatrix) -> Vec<f64> {
    let v = rho.values();
    let n = v.nrows() as f64;
    v.columns()
        .into_iter()
        .map(|col| col.iter().map(|r| (1.0 - r) * (1.0 - r)).sum::<f64>() / n)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RHO_FLOOR;
    use ndarray::array;

    fn rho(v: Array2<f64>) -> RhoMatrix {
        RhoMatrix::new(v).unwrap()
    }

    #[test]
    fn global_weight_examples() {
        let w = global_weights(&rho(array![[0.5, 0.8], [0.5, 0.6], [0.5, 0.4]]));
        assert_eq!(w.w[0], 2.0);
        assert!((w.w[1] - 2.5).abs() < 1e-12);
        let w = global_weights(&rho(array![[1.0], [1.0]]));
        assert!((w.w[0] - 1.0 / RHO_FLOOR).abs() / (1.0 / RHO_FLOOR) < 1e-3);
    }

    #[test]
    fn knn_tie_rule() {
        let idx = NeighborIndex::new(array![[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let got: Vec<usize> = idx.query(&[1.0], 2).unwrap().iter().map(|n| n.index).collect();
        assert_eq!(got, vec![1, 0]);
        let got: Vec<usize> = idx
            .query_instance(1, 2, true)
            .unwrap()
            .iter()
            .map(|n| n.index)
            .collect();
        assert_eq!(got, vec![1, 0]);
        assert!(idx.query(&[1.0], 5).is_err());
    }

    #[test]
    fn duplicates_come_first() {
        let idx = NeighborIndex::new(array![[5.0, 5.0], [0.0, 0.0], [5.0, 5.0], [4.0, 5.0]]).unwrap();
        let got: Vec<usize> = idx.query(&[5.0, 5.0], 3).unwrap().iter().map(|n| n.index).collect();
        assert_eq!(got, vec![0, 2, 3]);
        let got = idx.query_instance(0, 1, false).unwrap();
        assert_eq!((got[0].index, got[0].distance), (2, 0.0));
    }

    #[test]
    fn score_examples() {
        let r = rho(array![[0.5, 0.5]]);
        let prod = score_prod(&r);
        assert!((prod.scores[0] - 2.0 * 2f64.ln()).abs() < 1e-12);
        let rw = score_rw(&r, &WeightVector { w: vec![2.0, 1.0] }).unwrap();
        assert!((rw.scores[0] - 3.0 * 2f64.ln()).abs() < 1e-12);
        assert!(score_rw(&r, &WeightVector { w: vec![1.0] }).is_err());

        let top = rho(array![[1.0, 1.0, 1.0]]);
        assert!(score_prod(&top).scores[0] <= 3.0 * 2e-12);
    }

    #[test]
    fn local_weight_bounds() {
        let r = rho(array![[0.5, 0.9], [0.7, 0.2], [0.1, 0.3]]);
        let idx = NeighborIndex::new(array![[0.0], [1.0], [5.0]]).unwrap();
        let lw = local_weights(&r, &idx, 1).unwrap();
        for n in 0..3 {
            for i in 0..2 {
                assert_eq!(lw.w[[n, i]], 1.0 / (1.0 - r.values()[[n, i]]));
            }
        }
        assert!(local_weights(&r, &idx, 0).is_err());
        assert!(local_weights(&r, &idx, 4).is_err());
        let g = global_weights(&r);
        let full = local_weights(&r, &idx, 3).unwrap();
        for n in 0..3 {
            assert_eq!(full.w.row(n).to_vec(), g.w);
        }
    }

    #[test]
    fn brier_examples() {
        assert!(brier_per_dimension(&rho(array![[1.0], [1.0]]))[0] < 1e-20);
        assert_eq!(brier_per_dimension(&rho(array![[0.5], [0.5]]))[0], 0.25);
        assert!((brier_per_dimension(&rho(array![[0.9], [0.7]]))[0] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn ranking_breaks_ties_by_index() {
        assert_eq!(rank_descending(&[1.0, 3.0, 1.0, 3.0]), vec![1, 3, 0, 2]);
    }
}
