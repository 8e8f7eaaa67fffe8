use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ClusterError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once the relative inertia decrease falls below this.
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, seed, max_iter: 300, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    /// True when the loop ended on an unchanged assignment.
    pub converged: bool,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per point (lowest index wins ties) and the squared distance.
pub fn assign_nearest<V: AsRef<[f64]> + Sync>(data: &[V], centroids: &[Vec<f64>]) -> Vec<(usize, f64)> {
    data.par_iter()
        .map(|p| {
            let p = p.as_ref();
            let mut best = (0, f64::INFINITY);
            for (j, c) in centroids.iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .collect()
}

fn seed_plus_plus<V: AsRef<[f64]> + Sync>(data: &[V], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = data.par_iter().map(|p| sq_dist(p.as_ref(), data[chosen[0]].as_ref())).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // Every point coincides with a centre; take an unused index.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        let c = data[next].as_ref();
        d2.par_iter_mut().zip(data.par_iter()).for_each(|(d, p)| *d = d.min(sq_dist(p.as_ref(), c)));
    }
    chosen.into_iter().map(|i| data[i].as_ref().to_vec()).collect()
}

/// Lloyd's algorithm from distance-weighted seeding. Deterministic in
/// `params.seed` regardless of thread count: per-point work runs in parallel
/// but every reduction is sequential in index order.
pub fn kmeans<V: AsRef<[f64]> + Sync>(data: &[V], params: &KMeansParams) -> Result<KMeansResult, ClusterError> {
    let n = data.len();
    let k = params.k;
    if k == 0 || k > n {
        return Err(ClusterError::Argument(format!("k = {k} must be in 1..={n}")));
    }
    let dim = data[0].as_ref().len();
    if data.iter().any(|v| v.as_ref().len() != dim) {
        return Err(ClusterError::Shape("vectors have different lengths".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = seed_plus_plus(data, k, &mut rng);
    let mut assignment = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iter.max(1) {
        iterations += 1;
        let nearest = assign_nearest(data, &centroids);
        let inertia: f64 = nearest.iter().map(|x| x.1).sum();
        let new_assignment: Vec<usize> = nearest.iter().map(|x| x.0).collect();
        let changed = new_assignment != assignment;
        assignment = new_assignment;
        let prev = history.last().copied();
        history.push(inertia);
        if !changed {
            converged = true;
            break;
        }
        if let Some(prev) = prev {
            if prev <= 0.0 || (prev - inertia) / prev < params.tol {
                break;
            }
        }
        if iterations == params.max_iter {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &j) in data.iter().zip(&assignment) {
            counts[j] += 1;
            for (s, x) in sums[j].iter_mut().zip(p.as_ref()) {
                *s += x;
            }
        }
        let mut reseeded: Vec<usize> = Vec::new();
        for j in 0..k {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                centroids[j] = sums[j].iter().map(|s| s * inv).collect();
            } else {
                // Empty cluster: restart it on the point farthest from its centre.
                let far = (0..n)
                    .filter(|i| !reseeded.contains(i))
                    .fold(None, |best: Option<(usize, f64)>, i| match best {
                        Some((_, d)) if d >= nearest[i].1 => best,
                        _ => Some((i, nearest[i].1)),
                    })
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                reseeded.push(far);
                centroids[j] = data[far].as_ref().to_vec();
            }
        }
    }

    Ok(KMeansResult {
        k,
        centroids,
        assignment,
        inertia: *history.last().unwrap_or(&0.0),
        iterations,
        seed: params.seed,
        inertia_history: history,
        converged,
    })
}
