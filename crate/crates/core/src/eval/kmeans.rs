use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub k: usize,
    pub assignments: Vec<usize>,
    /// `k × dim`, row-major.
    pub centroids: Vec<f64>,
    pub inertia: f64,
    /// Inertia after each assignment step, starting with the seeding.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Lloyd's algorithm with seeded k-means++ initialization.
///
/// Stops when an assignment step changes nothing or after `max_iter`
/// updates. A cluster left empty by an update is moved onto the point
/// farthest from its own centroid. Distance ties go to the lower centroid
/// index.
pub fn kmeans(data: &[f32], dim: usize, k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    if dim == 0 || data.len() % dim != 0 {
        return Err(Error::InvalidInput("data is not a whole number of rows".into()));
    }
    let n = data.len() / dim;
    if k == 0 || k > n {
        return Err(Error::InvalidK(format!("k = {k} with {n} points")));
    }
    let points: Vec<f64> = data.iter().map(|x| f64::from(*x)).collect();
    let mut centroids = seed_plus_plus(&points, dim, k, seed);
    let (mut assign, mut cost) = assign_all(&points, dim, &centroids);
    let mut trace = vec![cost.iter().sum::<f64>()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        centroids = update(&points, dim, k, &assign, &cost);
        let (next, next_cost) = assign_all(&points, dim, &centroids);
        trace.push(next_cost.iter().sum::<f64>());
        cost = next_cost;
        if next == assign {
            converged = true;
            break;
        }
        assign = next;
    }
    Ok(KMeansResult {
        k,
        inertia: *trace.last().unwrap(),
        assignments: assign,
        centroids,
        inertia_trace: trace,
        iterations,
        converged,
    })
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    crate::distance::squared_euclidean_f64(a, b)
}

fn seed_plus_plus(points: &[f64], dim: usize, k: usize, seed: u64) -> Vec<f64> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n);
    let mut centroids = row(first).to_vec();
    let mut d2: Vec<f64> = (0..n).map(|i| sq(row(i), row(first))).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && *w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.extend_from_slice(row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq(row(i), row(pick)));
        }
    }
    centroids
}

/// Nearest centroid for every point and the squared distance to it.
fn assign_all(points: &[f64], dim: usize, centroids: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let n = points.len() / dim;
    let pairs: Vec<(usize, f64)> = par::map_range(n, |i| {
        let p = &points[i * dim..(i + 1) * dim];
        let mut best = (0, f64::INFINITY);
        for (c, cen) in centroids.chunks_exact(dim).enumerate() {
            let d = sq(p, cen);
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    });
    pairs.into_iter().unzip()
}

fn update(points: &[f64], dim: usize, k: usize, assign: &[usize], cost: &[f64]) -> Vec<f64> {
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &c) in assign.iter().enumerate() {
        counts[c] += 1;
        for (s, x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(&points[i * dim..(i + 1) * dim]) {
            *s += x;
        }
    }
    let mut taken = vec![false; assign.len()];
    for c in 0..k {
        if counts[c] > 0 {
            sums[c * dim..(c + 1) * dim]
                .iter_mut()
                .for_each(|s| *s /= counts[c] as f64);
            continue;
        }
        // Farthest point from its own centroid, lowest index on ties.
        let mut far = None;
        for (i, &d) in cost.iter().enumerate() {
            if !taken[i] && far.is_none_or(|(_, fd)| d > fd) {
                far = Some((i, d));
            }
        }
        if let Some((i, _)) = far {
            taken[i] = true;
            sums[c * dim..(c + 1) * dim].copy_from_slice(&points[i * dim..(i + 1) * dim]);
        }
    }
    sums
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_pairs() {
        let data = [0.0f32, 0.0, 0.0, 2.0, 100.0, 0.0, 100.0, 2.0];
        let r = kmeans(&data, 2, 2, 1, DEFAULT_MAX_ITER).unwrap();
        assert!(r.converged);
        assert_eq!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.assignments[2], r.assignments[3]);
        assert_ne!(r.assignments[0], r.assignments[2]);
        assert!((r.inertia - 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let data = [1.0f32, 2.0, 3.0, 6.0];
        let r = kmeans(&data, 1, 1, 0, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(r.centroids, vec![3.0]);
        // Population variance 3.5, times N.
        assert!((r.inertia - 14.0).abs() < 1e-12);
    }

    #[test]
    fn bad_k() {
        assert!(matches!(kmeans(&[1.0], 1, 2, 0, 10), Err(Error::InvalidK(_))));
        assert!(matches!(kmeans(&[1.0], 1, 0, 0, 10), Err(Error::InvalidK(_))));
    }

    #[test]
    fn seeded_runs_repeat() {
        let data: Vec<f32> = (0..300).map(|i| ((i * 7919) % 113) as f32).collect();
        assert_eq!(kmeans(&data, 3, 4, 9, 300).unwrap(), kmeans(&data, 3, 4, 9, 300).unwrap());
    }

    #[test]
    fn duplicate_points_leave_clusters_to_reseed() {
        let data = [1.0f32, 1.0, 1.0, 5.0];
        let r = kmeans(&data, 1, 3, 3, DEFAULT_MAX_ITER).unwrap();
        assert!(r.assignments.iter().all(|&a| a < 3));
        assert!(r.inertia.is_finite());
    }
}
