//! Two-stage day classification: k-means on stacked HOG descriptors, then
//! shape clustering of density profiles inside each k-means cluster.

mod bspline;
mod kmeans;
mod metrics;

pub use bspline::{BSplineBasis, BasisSpec};
pub use kmeans::{assign_nearest, kmeans, KMeansParams, KMeansResult};
pub use metrics::{adjusted_rand_index, mean_silhouette, DistanceMatrix};

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Silhouette below which a cluster is left unsplit by [`select_groups`].
pub const DEFAULT_MIN_SPLIT_SILHOUETTE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    /// `None` when undefined (one occupied cluster or coincident points).
    pub silhouette: Option<f64>,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k: usize,
    pub scores: Vec<KScore>,
    /// All vectors coincide, so no silhouette exists; `k` is the range start.
    pub degenerate: bool,
    pub result: KMeansResult,
}

fn scan_k<V: AsRef<[f64]> + Sync>(
    data: &[V],
    ks: impl Iterator<Item = usize>,
    seed: u64,
    dist: &DistanceMatrix,
) -> Result<Vec<(KScore, KMeansResult)>, ClusterError> {
    ks.map(|k| {
        let r = kmeans(data, &KMeansParams::new(k, seed))?;
        let silhouette = if k >= 2 { mean_silhouette(dist, &r.assignment) } else { None };
        Ok((KScore { k, silhouette, inertia: r.inertia }, r))
    })
    .collect()
}

/// Picks the k in `k_range` with the largest mean silhouette, preferring the
/// smaller k on ties.
pub fn choose_k<V: AsRef<[f64]> + Sync>(
    data: &[V],
    k_range: RangeInclusive<usize>,
    seed: u64,
) -> Result<KSelection, ClusterError> {
    let n = data.len();
    if k_range.is_empty() {
        return Err(ClusterError::Argument("empty k range".into()));
    }
    if *k_range.start() < 2 || *k_range.end() + 1 > n {
        return Err(ClusterError::Argument(format!(
            "k range {k_range:?} must lie within 2..={}",
            n.saturating_sub(1)
        )));
    }
    let dist = DistanceMatrix::euclidean(data);
    if dist.all_zero() {
        let k = *k_range.start();
        let r = kmeans(data, &KMeansParams::new(k, seed))?;
        let scores = vec![KScore { k, silhouette: None, inertia: r.inertia }];
        return Ok(KSelection { k, scores, degenerate: true, result: r });
    }
    let runs = scan_k(data, k_range.clone(), seed, &dist)?;
    let best = best_by_silhouette(&runs).unwrap_or(0);
    let (scores, mut results): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let k = scores[best].k;
    Ok(KSelection { k, scores, degenerate: false, result: results.swap_remove(best) })
}

fn best_by_silhouette(runs: &[(KScore, KMeansResult)]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (s, _)) in runs.iter().enumerate() {
        if let Some(v) = s.silhouette {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|b| b.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalClusterResult {
    pub parent: usize,
    pub g: usize,
    pub assignment: Vec<usize>,
    pub basis: BasisSpec,
    pub coefficients: Vec<Vec<f64>>,
    /// Candidate scores when G was selected automatically.
    pub scores: Vec<KScore>,
}

fn project_all(curves: &[Vec<f64>], basis: BasisSpec) -> Result<Vec<Vec<f64>>, ClusterError> {
    let n_points = curves.first().map_or(0, Vec::len);
    let b = BSplineBasis::new(basis, n_points)?;
    curves.iter().map(|c| b.project(c)).collect()
}

/// Projects each curve on a clamped B-spline basis and runs k-means with
/// `k = g` on the coefficient vectors.
pub fn functional_cluster(
    parent: usize,
    curves: &[Vec<f64>],
    g: usize,
    basis: BasisSpec,
    seed: u64,
) -> Result<FunctionalClusterResult, ClusterError> {
    if g == 0 || g > curves.len() {
        return Err(ClusterError::Argument(format!("G = {g} must be in 1..={}", curves.len())));
    }
    let coefficients = project_all(curves, basis)?;
    let r = kmeans(&coefficients, &KMeansParams::new(g, seed))?;
    Ok(FunctionalClusterResult { parent, g, assignment: r.assignment, basis, coefficients, scores: vec![] })
}

/// Chooses G in `1..=g_max` for one parent cluster. Splits only when the best
/// mean silhouette over G >= 2 reaches `min_silhouette`; otherwise G = 1.
pub fn select_groups(
    parent: usize,
    curves: &[Vec<f64>],
    g_max: usize,
    basis: BasisSpec,
    seed: u64,
    min_silhouette: f64,
) -> Result<FunctionalClusterResult, ClusterError> {
    let n = curves.len();
    if n == 0 {
        return Err(ClusterError::Argument("no curves".into()));
    }
    let coefficients = project_all(curves, basis)?;
    let upper = g_max.min(n.saturating_sub(1));
    let mut scores = vec![KScore { k: 1, silhouette: None, inertia: kmeans(&coefficients, &KMeansParams::new(1, seed))?.inertia }];
    let mut g = 1;
    let mut assignment = vec![0; n];
    if upper >= 2 {
        let dist = DistanceMatrix::euclidean(&coefficients);
        if !dist.all_zero() {
            let runs = scan_k(&coefficients, 2..=upper, seed, &dist)?;
            if let Some(best) = best_by_silhouette(&runs) {
                if runs[best].0.silhouette.unwrap_or(f64::NEG_INFINITY) >= min_silhouette {
                    g = runs[best].0.k;
                    assignment = runs[best].1.assignment.clone();
                }
            }
            scores.extend(runs.into_iter().map(|r| r.0));
        }
    }
    Ok(FunctionalClusterResult { parent, g, assignment, basis, coefficients, scores })
}
