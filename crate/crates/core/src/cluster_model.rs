//! The explained model: L1-normalised Euclidean distances from a sample to
//! every cluster centroid. Smaller entries mean the sample sits closer to
//! that cluster.

use ndarray::{Array2, ArrayView1};

use crate::annotation::ClusterAssignment;
use crate::dataset::Dataset;
use crate::error::ModelError;

/// Per-cluster means of the member rows in feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    centroids: Array2<f64>,
}

impl CentroidSet {
    pub fn new(centroids: Array2<f64>) -> Result<Self, ModelError> {
        if centroids.nrows() < 2 {
            return Err(ModelError::TooFewClusters(centroids.nrows()));
        }
        Ok(Self { centroids })
    }

    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn centroids(&self) -> &Array2<f64> {
        &self.centroids
    }

    pub fn centroid(&self, c: usize) -> ArrayView1<'_, f64> {
        self.centroids.row(c)
    }

    /// Probability vector for `x`. See [`cluster_probability`].
    pub fn probability(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        if x.len() != self.n_features() {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.k()];
        self.probability_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked hot-path variant: `x.len() == m` and `out.len() == K`.
    #[inline]
    pub fn probability_into(&self, x: &[f64], out: &mut [f64]) {
        let m = self.n_features();
        let flat = self
            .centroids
            .as_slice()
            .expect("centroids are stored contiguously");
        let mut total = 0.0;
        for (c, slot) in out.iter_mut().enumerate() {
            let row = &flat[c * m..(c + 1) * m];
            let d2: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            let d = d2.sqrt();
            *slot = d;
            total += d;
        }
        normalize_l1(out, total);
    }
}

#[inline]
pub(crate) fn normalize_l1(out: &mut [f64], total: f64) {
    if total > 0.0 {
        for v in out.iter_mut() {
            *v /= total;
        }
    } else {
        let uniform = 1.0 / out.len() as f64;
        out.fill(uniform);
    }
}

/// Centroid of every annotated cluster over the full dataset. Unassigned
/// rows are ignored.
pub fn centroids(d: &Dataset, a: &ClusterAssignment) -> Result<CentroidSet, ModelError> {
    if a.len() != d.n_rows() {
        return Err(ModelError::DimensionMismatch {
            expected: d.n_rows(),
            got: a.len(),
        });
    }
    let k = a.k();
    let sizes = a.sizes();
    let non_empty = sizes.iter().filter(|&&s| s > 0).count();
    if k < 2 || non_empty < k {
        return Err(ModelError::TooFewClusters(non_empty));
    }
    let m = d.n_features();
    let mut sums = Array2::<f64>::zeros((k, m));
    for (row, &label) in d.rows().outer_iter().zip(a.labels()) {
        if label >= 0 {
            let mut target = sums.row_mut(label as usize);
            target += &row;
        }
    }
    for (mut row, &size) in sums.outer_iter_mut().zip(&sizes) {
        row /= size as f64;
    }
    CentroidSet::new(sums)
}

/// Distance vector `D_i = ||x - C_i||`, normalised by its L1 norm. When `x`
/// coincides with every centroid the result is uniform.
pub fn cluster_probability(x: &[f64], cs: &CentroidSet) -> Result<Vec<f64>, ModelError> {
    cs.probability(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::AnnotationMethod;
    use ndarray::array;
    use proptest::prelude::*;

    fn cs(rows: Array2<f64>) -> CentroidSet {
        CentroidSet::new(rows).unwrap()
    }

    #[test]
    fn singleton_means() {
        let d = Dataset::new(array![[0.0, 0.0], [2.0, 2.0]], vec!["a".into(), "b".into()], None)
            .unwrap();
        let a = ClusterAssignment::new(vec![0, 1], AnnotationMethod::Labeled).unwrap();
        assert_eq!(centroids(&d, &a).unwrap().centroids(), &array![[0.0, 0.0], [2.0, 2.0]]);
    }

    #[test]
    fn unassigned_rows_are_ignored() {
        let d = Dataset::new(array![[0.0], [2.0], [100.0], [4.0]], vec!["a".into()], None).unwrap();
        let a = ClusterAssignment::new(vec![0, 0, -1, 1], AnnotationMethod::Manual).unwrap();
        assert_eq!(centroids(&d, &a).unwrap().centroids(), &array![[1.0], [4.0]]);
    }

    #[test]
    fn one_cluster_is_too_few() {
        let d = Dataset::new(array![[0.0], [2.0], [5.0]], vec!["a".into()], None).unwrap();
        let a = ClusterAssignment::new(vec![-1, 0, -1], AnnotationMethod::Manual).unwrap();
        assert_eq!(centroids(&d, &a).unwrap_err(), ModelError::TooFewClusters(1));
    }

    #[test]
    fn analytic_probabilities() {
        let two = cs(array![[0.0, 0.0], [2.0, 0.0]]);
        assert_eq!(cluster_probability(&[0.0, 0.0], &two).unwrap(), vec![0.0, 1.0]);
        assert_eq!(cluster_probability(&[1.0, 5.0], &two).unwrap(), vec![0.5, 0.5]);
        let three = cs(array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(cluster_probability(&[0.0, 0.0], &three).unwrap(), vec![0.0, 0.5, 0.5]);
    }

    #[test]
    fn coincident_centroids_give_uniform() {
        let same = cs(array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]);
        let p = cluster_probability(&[1.0, 1.0], &same).unwrap();
        assert!(p.iter().all(|&v| v == 1.0 / 3.0));
    }

    #[test]
    fn dimension_mismatch() {
        let two = cs(array![[0.0, 0.0], [2.0, 0.0]]);
        assert_eq!(
            cluster_probability(&[0.0], &two).unwrap_err(),
            ModelError::DimensionMismatch { expected: 2, got: 1 }
        );
    }

    fn instance() -> impl Strategy<Value = (Array2<f64>, Vec<f64>)> {
        (2usize..6, 1usize..6).prop_flat_map(|(k, m)| {
            (
                proptest::collection::vec(-50.0f64..50.0, k * m),
                proptest::collection::vec(-50.0f64..50.0, m),
            )
                .prop_map(move |(c, x)| (Array2::from_shape_vec((k, m), c).unwrap(), x))
        })
    }

    proptest! {
        #[test]
        fn probabilities_are_a_distribution((c, x) in instance()) {
            let p = cluster_probability(&x, &cs(c)).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn translation_and_scaling_invariance(
            (c, x) in instance(),
            shift in -20.0f64..20.0,
            scale in 0.01f64..100.0,
        ) {
            let base = cluster_probability(&x, &cs(c.clone())).unwrap();
            let moved = cluster_probability(
                &x.iter().map(|v| v + shift).collect::<Vec<_>>(),
                &cs(c.mapv(|v| v + shift)),
            ).unwrap();
            let scaled = cluster_probability(
                &x.iter().map(|v| v * scale).collect::<Vec<_>>(),
                &cs(c.mapv(|v| v * scale)),
            ).unwrap();
            for i in 0..base.len() {
                prop_assert!((base[i] - moved[i]).abs() < 1e-12);
                prop_assert!((base[i] - scaled[i]).abs() < 1e-12);
            }
        }
    }
}
