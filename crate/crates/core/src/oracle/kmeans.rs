//! K-means over normalized size maps.
//!
//! One run with k-means++ seeding from a fixed seed; Lloyd iterations until
//! the assignment stops changing or `max_iterations` is reached.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClipId;
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 16;
pub const DEFAULT_MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centers: Vec<Vec<f64>>,
    /// Clip nearest to each center.
    pub representative_ids: Vec<ClipId>,
    /// Cluster of each input, in input order.
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned center after each iteration.
    pub objective_trace: Vec<f64>,
}

impl ClusterModel {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = dist2(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_seeds(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.gen_range(0..n)].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            // all remaining points coincide with a center
            rng.gen_range(0..n)
        };
        let c = points[pick].to_vec();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// Clusters `maps` into `k` groups.
pub fn cluster_distributions(
    maps: &[(ClipId, Vec<f64>)],
    k: usize,
    seed: u64,
    max_iterations: usize,
) -> Result<ClusterModel> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if k > maps.len() {
        return Err(Error::Input(format!(
            "k = {k} exceeds the {} clips",
            maps.len()
        )));
    }
    let dim = maps[0].1.len();
    if maps.iter().any(|m| m.1.len() != dim) {
        return Err(Error::Input("size maps differ in length".into()));
    }
    let points: Vec<&[f64]> = maps.iter().map(|m| m.1.as_slice()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_seeds(&points, k, &mut rng);
    let mut assignments = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();

    for _ in 0..max_iterations.max(1) {
        let mut changed = false;
        let mut objective = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, &centers);
            objective += d;
            if assignments[i] != j {
                assignments[i] = j;
                changed = true;
            }
        }
        trace.push(objective);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignments[i]] += 1;
            for (s, v) in sums[assignments[i]].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for j in 0..k {
            // an empty cluster keeps its previous center
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }

    let representative_ids = centers
        .iter()
        .map(|c| {
            let (i, _) = nearest(c, &points.iter().map(|p| p.to_vec()).collect::<Vec<_>>());
            maps[i].0.clone()
        })
        .collect();
    Ok(ClusterModel {
        k,
        centers,
        representative_ids,
        assignments,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maps(points: &[Vec<f64>]) -> Vec<(ClipId, Vec<f64>)> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| (ClipId::new("v", i), p.clone()))
            .collect()
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let m = maps(&[vec![0.0, 10.0], vec![2.0, 20.0], vec![4.0, 60.0]]);
        let model = cluster_distributions(&m, 1, 0, 10).unwrap();
        assert!((model.centers[0][0] - 2.0).abs() < 1e-12);
        assert!((model.centers[0][1] - 30.0).abs() < 1e-12);
        assert_eq!(model.representative_ids[0], ClipId::new("v", 1));
    }

    #[test]
    fn rejects_too_many_clusters() {
        let m = maps(&[vec![0.0], vec![1.0]]);
        assert!(cluster_distributions(&m, 3, 0, 10).is_err());
        assert!(cluster_distributions(&m, 0, 0, 10).is_err());
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..9).map(|_| rng.gen_range(0.0..100.0)).collect())
            .collect();
        let model = cluster_distributions(&maps(&pts), 5, 11, 100).unwrap();
        for w in model.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", model.objective_trace);
        }
        let again = cluster_distributions(&maps(&pts), 5, 11, 100).unwrap();
        assert_eq!(model, again);
    }
}
