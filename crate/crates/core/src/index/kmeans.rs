//! Seeded Lloyd k-means with k-means++ initialization, used to train the
//! IVF coarse quantizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed_store::EmbeddingStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub max_iterations: usize,
    /// Stop once the total squared centroid movement, relative to the total
    /// squared centroid norm, falls to this value or below.
    pub tolerance: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iterations: 25,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// `k × dimension`, row-major.
    pub centroids: Vec<f32>,
    /// Cluster of each store row.
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

/// Index of the closest centroid; ties go to the lower index.
pub fn nearest_centroid(point: &[f32], centroids: &[f32], dimension: usize) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.chunks_exact(dimension).enumerate() {
        let d = squared_distance(point, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn plus_plus_seeds(store: &EmbeddingStore, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = store.len();
    let d = store.dimension();
    let mut centroids = Vec::with_capacity(k * d);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(store.vector_at(first));
    let mut closest: Vec<f64> = (0..n)
        .map(|p| squared_distance(store.vector_at(p), store.vector_at(first)))
        .collect();
    while centroids.len() < k * d {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            closest
                .iter()
                .position(|&w| {
                    acc += w;
                    acc > target
                })
                .unwrap_or_else(|| closest.iter().rposition(|&w| w > 0.0).unwrap_or(n - 1))
        } else {
            // Every point coincides with a chosen seed.
            rng.random_range(0..n)
        };
        let seed = store.vector_at(pick);
        centroids.extend_from_slice(seed);
        for (p, best) in closest.iter_mut().enumerate() {
            *best = best.min(squared_distance(store.vector_at(p), seed));
        }
    }
    centroids
}

fn assign(store: &EmbeddingStore, centroids: &[f32]) -> Vec<usize> {
    let d = store.dimension();
    (0..store.len())
        .into_par_iter()
        .map(|p| nearest_centroid(store.vector_at(p), centroids, d))
        .collect()
}

/// Clusters the store rows into `k` groups. `k` must be in `1..=store.len()`;
/// the caller validates this.
pub fn kmeans(store: &EmbeddingStore, k: usize, seed: u64, config: &KMeansConfig) -> KMeansResult {
    let d = store.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeds(store, k, &mut rng);
    let mut assignments = assign(store, &centroids);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iterations {
        iterations += 1;
        let mut sums = vec![0f64; k * d];
        let mut counts = vec![0usize; k];
        for (p, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            for (s, &x) in sums[c * d..(c + 1) * d].iter_mut().zip(store.vector_at(p)) {
                *s += f64::from(x);
            }
        }
        let mut shift = 0.0;
        let mut magnitude = 0.0;
        for c in 0..k {
            let old = &mut centroids[c * d..(c + 1) * d];
            magnitude += old.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>();
            // An empty cluster keeps its previous centroid.
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            for (o, &s) in old.iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                let updated = (s * inv) as f32;
                shift += (f64::from(updated) - f64::from(*o)).powi(2);
                *o = updated;
            }
        }
        assignments = assign(store, &centroids);
        let relative = if magnitude > 0.0 { shift / magnitude } else { shift };
        if relative <= config.tolerance {
            converged = true;
            break;
        }
    }

    KMeansResult {
        centroids,
        assignments,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed_store::StoreBuilder;

    fn line_store() -> EmbeddingStore {
        let mut b = StoreBuilder::new(1, false).unwrap();
        for (i, x) in [0.0f32, 0.1, 0.2, 10.0, 10.1, 10.2].iter().enumerate() {
            b.push(format!("p{i}"), vec![*x]).unwrap();
        }
        b.finish()
    }

    #[test]
    fn separates_two_groups() {
        let r = kmeans(&line_store(), 2, 7, &KMeansConfig::default());
        assert!(r.converged);
        assert_eq!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.assignments[1], r.assignments[2]);
        assert_eq!(r.assignments[3], r.assignments[5]);
        assert_ne!(r.assignments[0], r.assignments[3]);
    }

    #[test]
    fn deterministic_for_seed() {
        let s = line_store();
        let cfg = KMeansConfig::default();
        assert_eq!(kmeans(&s, 3, 11, &cfg), kmeans(&s, 3, 11, &cfg));
    }

    #[test]
    fn identical_points_do_not_hang() {
        let mut b = StoreBuilder::new(2, false).unwrap();
        for i in 0..5 {
            b.push(format!("{i}"), vec![1.0, 1.0]).unwrap();
        }
        let r = kmeans(&b.finish(), 3, 0, &KMeansConfig::default());
        assert_eq!(r.assignments.len(), 5);
        assert!(r.converged);
    }
}
