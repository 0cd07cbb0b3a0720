//! Fixtures shared by the benchmarks.

use cluster_shapley::shapley::BackgroundSet;
use ndarray::Axis;
use cluster_shapley::synthetic::blobs;
use cluster_shapley::{centroids, CentroidSet, ClusterAssignment, Dataset};

/// A seeded blob dataset with its centroids, a 100-row background and one
/// row to explain.
pub struct Instance {
    pub dataset: Dataset,
    pub assignment: ClusterAssignment,
    pub centroids: CentroidSet,
    pub background: BackgroundSet,
    pub x: Vec<f64>,
}

pub fn instance(n: usize, m: usize, k: usize) -> Instance {
    let (dataset, assignment) = blobs(n, m, k, 3.0, 17);
    let cs = centroids(&dataset, &assignment).expect("non-empty clusters");
    let rows: Vec<usize> = (0..n.min(100)).collect();
    let background = BackgroundSet::new(dataset.rows().select(Axis(0), &rows)).expect("rows");
    let x = dataset.row(n - 1).to_vec();
    Instance { dataset, assignment, centroids: cs, background, x }
}

