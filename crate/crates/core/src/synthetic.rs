//! Seeded synthetic datasets for tests, benchmarks and scale checks.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::annotation::{AnnotationMethod, ClusterAssignment};
use crate::dataset::Dataset;

fn names(m: usize) -> Vec<String> {
    (0..m).map(|j| format!("x{j}")).collect()
}

fn labelled(rows: Array2<f64>, labels: Vec<i64>) -> (Dataset, ClusterAssignment) {
    let m = rows.ncols();
    let a = ClusterAssignment::new(labels.clone(), AnnotationMethod::Labeled)
        .expect("every cluster gets rows");
    let d = Dataset::new(rows, names(m), Some(labels)).expect("finite values");
    (d, a)
}

/// `n` rows in `k` unit-variance Gaussian clusters in R^m, rows assigned
/// round-robin. Cluster centres are uniform in `[-spread, spread]^m`.
pub fn blobs(n: usize, m: usize, k: usize, spread: f64, seed: u64) -> (Dataset, ClusterAssignment) {
    assert!(k >= 1 && n >= k, "need at least one row per cluster");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let box_ = Uniform::new_inclusive(-spread, spread).expect("valid range");
    let centres: Vec<Vec<f64>> =
        (0..k).map(|_| (0..m).map(|_| box_.sample(&mut rng)).collect()).collect();
    let labels: Vec<i64> = (0..n).map(|i| (i % k) as i64).collect();
    let rows = Array2::from_shape_fn((n, m), |(i, j)| centres[i % k][j] + unit.sample(&mut rng));
    labelled(rows, labels)
}

/// Two clusters of `per_cluster` rows that differ only in feature 0
/// (means -`gap`/2 and +`gap`/2, sd 0.5); the other `m - 1` features are
/// standard normal noise shared by both.
pub fn one_discriminative(per_cluster: usize, m: usize, gap: f64, seed: u64) -> (Dataset, ClusterAssignment) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tight = Normal::new(0.0, 0.5).expect("valid normal");
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let n = 2 * per_cluster;
    let labels: Vec<i64> = (0..n).map(|i| (i / per_cluster) as i64).collect();
    let rows = Array2::from_shape_fn((n, m), |(i, j)| {
        if j == 0 {
            (labels[i] as f64 - 0.5) * gap + tight.sample(&mut rng)
        } else {
            noise.sample(&mut rng)
        }
    });
    labelled(rows, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let (d, a) = blobs(31, 4, 3, 5.0, 1);
        assert_eq!((d.n_rows(), d.n_features(), a.k()), (31, 4, 3));
        assert_eq!(blobs(31, 4, 3, 5.0, 1).0, d);
        assert_ne!(blobs(31, 4, 3, 5.0, 2).0, d);
    }

    #[test]
    fn only_feature_zero_separates() {
        let (d, a) = one_discriminative(200, 4, 6.0, 3);
        for j in 0..4 {
            let mean = |c: usize| {
                let rows = a.members(c);
                rows.iter().map(|&i| d.rows()[[i, j]]).sum::<f64>() / rows.len() as f64
            };
            let gap = (mean(1) - mean(0)).abs();
            if j == 0 {
                assert!(gap > 5.0);
            } else {
                assert!(gap < 0.4);
            }
        }
    }
}
