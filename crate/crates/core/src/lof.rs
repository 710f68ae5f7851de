//! Local Outlier Factor over the joint (x, y) attribute space. This is the
//! unconditional baseline: it looks for sparse regions, not for unusual
//! outputs given the inputs.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{McodeError, Result};
use crate::par;
use crate::scoring::{NeighborIndex, ScoreMethod, ScoreVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LofConfig {
    pub k: usize,
    /// Lower bound applied to each reachability distance.
    pub distance_floor: f64,
}

impl Default for LofConfig {
    fn default() -> Self {
        Self {
            k: 100,
            distance_floor: 1e-12,
        }
    }
}

/// k-neighborhood of one point: every other point no farther than its k-th
/// nearest neighbor, so ties at the boundary can make it larger than k.
#[derive(Debug, Clone)]
struct Neighborhood {
    k_distance: f64,
    members: Vec<(usize, f64)>,
}

fn neighborhood(index: &NeighborIndex, n: usize, k: usize) -> Neighborhood {
    let pts = index.points();
    let me = pts.row(n);
    let mut all: Vec<(usize, f64)> = pts
        .rows()
        .into_iter()
        .enumerate()
        .filter(|&(j, _)| j != n)
        .map(|(j, row)| {
            let d2: f64 = row.iter().zip(me.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            (j, d2.sqrt())
        })
        .collect();
    let (_, kth, _) = all.select_nth_unstable_by(k - 1, |a, b| a.1.total_cmp(&b.1));
    let k_distance = kth.1;
    all.retain(|&(_, d)| d <= k_distance);
    all.sort_unstable_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Neighborhood {
        k_distance,
        members: all,
    }
}

pub fn lof_scores(points: ArrayView2<'_, f64>, cfg: &LofConfig) -> Result<ScoreVector> {
    let n = points.nrows();
    if cfg.k == 0 || cfg.k >= n {
        return Err(McodeError::Config(format!(
            "LOF needs 1 <= k < N (k = {}, N = {n})",
            cfg.k
        )));
    }
    if cfg.distance_floor.is_nan() || cfg.distance_floor <= 0.0 {
        return Err(McodeError::Config("distance floor must be positive".into()));
    }
    let index = NeighborIndex::new(points.to_owned())?;
    let hoods = par::map_range(n, |i| neighborhood(&index, i, cfg.k));

    let lrd = par::map_range(n, |i| {
        let h = &hoods[i];
        let reach: f64 = h
            .members
            .iter()
            .map(|&(o, d)| hoods[o].k_distance.max(d).max(cfg.distance_floor))
            .sum();
        h.members.len() as f64 / reach
    });

    let scores = par::map_range(n, |i| {
        let h = &hoods[i];
        let ratio: f64 = h.members.iter().map(|&(o, _)| lrd[o] / lrd[i]).sum();
        ratio / h.members.len() as f64
    });
    Ok(ScoreVector {
        scores,
        method: ScoreMethod::Lof,
    })
}
