//! Cluster annotation: ground-truth labels, clustering of the embedding, or
//! manual lasso polygons drawn in the visual space.

use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::embedding::Embedding;
use crate::error::AnnotationError;
use crate::hierarchy::{linkage, DistanceMatrix, Linkage};

/// Label used for points that belong to no cluster.
pub const UNASSIGNED: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationMethod {
    Labeled,
    Clustering,
    Manual,
}

/// Per-row cluster ids in `{-1} ∪ [0, k)`, every cluster non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AssignmentRecord")]
pub struct ClusterAssignment {
    labels: Vec<i64>,
    k: usize,
    method: AnnotationMethod,
}

#[derive(Deserialize)]
struct AssignmentRecord {
    labels: Vec<i64>,
    k: Option<usize>,
    method: AnnotationMethod,
}

impl TryFrom<AssignmentRecord> for ClusterAssignment {
    type Error = AnnotationError;

    fn try_from(r: AssignmentRecord) -> Result<Self, AnnotationError> {
        let a = Self::new(r.labels, r.method)?;
        match r.k {
            Some(k) if k != a.k => Err(AnnotationError::InvalidAssignment(format!(
                "k = {k} but labels span {} clusters",
                a.k
            ))),
            _ => Ok(a),
        }
    }
}

impl ClusterAssignment {
    /// Validates the label vector. `k` is inferred as `max label + 1`.
    pub fn new(labels: Vec<i64>, method: AnnotationMethod) -> Result<Self, AnnotationError> {
        let k = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
        let mut counts = vec![0usize; k];
        for &l in &labels {
            if l < UNASSIGNED {
                return Err(AnnotationError::InvalidAssignment(format!("label {l} < -1")));
            }
            if l >= 0 {
                counts[l as usize] += 1;
            }
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(AnnotationError::EmptyCluster(empty as i64));
        }
        Ok(Self { labels, k, method })
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn method(&self) -> AnnotationMethod {
        self.method
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Row indices of cluster `c`, ascending.
    pub fn members(&self, c: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == c as i64)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.k];
        for &l in &self.labels {
            if l >= 0 {
                counts[l as usize] += 1;
            }
        }
        counts
    }
}

/// A closed lasso path in embedding coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPolygon {
    pub cluster_id: i64,
    pub vertices: Vec<[f64; 2]>,
}

/// How to produce the assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum AnnotationSpec {
    Labeled,
    Kmeans {
        k: usize,
        #[serde(default = "default_seed")]
        seed: u64,
    },
    Agglomerative {
        k: usize,
        #[serde(default = "default_linkage")]
        linkage: Linkage,
    },
    Manual {
        #[serde(default)]
        polygons: Vec<LassoPolygon>,
    },
}

fn default_seed() -> u64 {
    42
}

fn default_linkage() -> Linkage {
    Linkage::Average
}

/// Dispatches to the labeled, clustering, or manual path.
///
/// Labeled datasets need no embedding; the other paths work in the 2-D
/// visual space.
pub fn annotate(
    d: &Dataset,
    e: Option<&Embedding>,
    spec: &AnnotationSpec,
) -> Result<ClusterAssignment, AnnotationError> {
    match spec {
        AnnotationSpec::Labeled => {
            let truth = d.ground_truth().ok_or(AnnotationError::MissingLabels)?;
            let mut seen: Vec<i64> = Vec::new();
            let labels = truth
                .iter()
                .map(|l| match seen.iter().position(|s| s == l) {
                    Some(i) => i as i64,
                    None => {
                        seen.push(*l);
                        seen.len() as i64 - 1
                    }
                })
                .collect();
            ClusterAssignment::new(labels, AnnotationMethod::Labeled)
        }
        AnnotationSpec::Kmeans { k, seed } => {
            let e = e.ok_or(AnnotationError::MissingEmbedding)?;
            let labels = kmeans(e, *k, *seed)?;
            ClusterAssignment::new(to_i64(labels), AnnotationMethod::Clustering)
        }
        AnnotationSpec::Agglomerative { k, linkage } => {
            let e = e.ok_or(AnnotationError::MissingEmbedding)?;
            let labels = agglomerative(e, *k, *linkage)?;
            ClusterAssignment::new(to_i64(labels), AnnotationMethod::Clustering)
        }
        AnnotationSpec::Manual { polygons } => {
            let e = e.ok_or(AnnotationError::MissingEmbedding)?;
            lasso_assign(e, polygons)
        }
    }
}

fn to_i64(labels: Vec<usize>) -> Vec<i64> {
    labels.into_iter().map(|l| l as i64).collect()
}

fn check_k(k: usize, n: usize) -> Result<(), AnnotationError> {
    if k < 2 || k > n {
        Err(AnnotationError::BadK { k, n })
    } else {
        Ok(())
    }
}

const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Vec<[f64; 2]>,
    /// Within-cluster sum of squares after every centroid update.
    pub inertia: Vec<f64>,
    pub iterations: usize,
}

/// Lloyd's algorithm with k-means++ seeding on the embedding.
pub fn kmeans(e: &Embedding, k: usize, seed: u64) -> Result<Vec<usize>, AnnotationError> {
    kmeans_fit(e, k, seed).map(|fit| fit.labels)
}

pub fn kmeans_fit(e: &Embedding, k: usize, seed: u64) -> Result<KMeansFit, AnnotationError> {
    let n = e.len();
    check_k(k, n)?;
    let points: Vec<[f64; 2]> = (0..n).map(|i| e.point(i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(&points, k, &mut rng);

    let mut labels = vec![usize::MAX; n];
    let mut inertia = Vec::new();
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        repair_empty(&points, &mut next, &centroids, k);
        let changed = next != labels;
        labels = next;
        centroids = means(&points, &labels, k);
        inertia.push(wcss(&points, &labels, &centroids));
        if !changed {
            break;
        }
    }
    Ok(KMeansFit {
        labels,
        centroids,
        inertia,
        iterations,
    })
}

fn sq_dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(p: &[f64; 2], centroids: &[[f64; 2]]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(c, q)| (c, sq_dist(p, q)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn kmeans_plus_plus(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick];
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(points: &[[f64; 2]], labels: &mut [usize], centroids: &[[f64; 2]], k: usize) {
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let donor = (0..points.len())
            .filter(|&i| counts[labels[i]] > 1)
            .map(|i| (i, sq_dist(&points[i], &centroids[labels[i]])))
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        if let Some((i, _)) = donor {
            counts[labels[i]] -= 1;
            labels[i] = empty;
            counts[empty] += 1;
        }
    }
}

fn means(points: &[[f64; 2]], labels: &[usize], k: usize) -> Vec<[f64; 2]> {
    let mut sums = vec![[0.0, 0.0]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        sums[l][0] += p[0];
        sums[l][1] += p[1];
        counts[l] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| {
            let c = c.max(1) as f64;
            [s[0] / c, s[1] / c]
        })
        .collect()
}

fn wcss(points: &[[f64; 2]], labels: &[usize], centroids: &[[f64; 2]]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}

/// Hierarchical clustering of the embedding cut at `k` clusters.
pub fn agglomerative(
    e: &Embedding,
    k: usize,
    method: Linkage,
) -> Result<Vec<usize>, AnnotationError> {
    let n = e.len();
    check_k(k, n)?;
    let points: Vec<[f64; 2]> = (0..n).map(|i| e.point(i)).collect();
    let dendro = linkage(&DistanceMatrix::euclidean(&points), method);
    Ok(dendro.cut(k))
}

/// Assigns each embedded point to the lowest-id polygon containing it.
///
/// Containment is even-odd ray casting with points on an edge counted as
/// inside. Several polygons may share a cluster id; the ids must cover
/// `0..K` and every cluster must capture at least one point.
pub fn lasso_assign(
    e: &Embedding,
    polygons: &[LassoPolygon],
) -> Result<ClusterAssignment, AnnotationError> {
    if polygons.is_empty() {
        return Err(AnnotationError::MissingPolygons);
    }
    for p in polygons {
        if p.vertices.len() < 3 {
            return Err(AnnotationError::DegeneratePolygon(p.cluster_id));
        }
    }
    let mut ids: Vec<i64> = polygons.iter().map(|p| p.cluster_id).collect();
    ids.sort_unstable();
    ids.dedup();
    for (expected, &id) in ids.iter().enumerate() {
        if id != expected as i64 {
            return Err(AnnotationError::NonContiguousClusterIds(
                (expected as i64).min(id.max(0)),
            ));
        }
    }
    let mut order: Vec<&LassoPolygon> = polygons.iter().collect();
    order.sort_by_key(|p| p.cluster_id);

    let labels: Vec<i64> = (0..e.len())
        .map(|i| {
            let pt = e.point(i);
            order
                .iter()
                .find(|p| point_in_polygon(pt, &p.vertices))
                .map_or(UNASSIGNED, |p| p.cluster_id)
        })
        .collect();
    let k = ids.len();
    let mut counts = vec![0usize; k];
    for &l in &labels {
        if l >= 0 {
            counts[l as usize] += 1;
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(AnnotationError::EmptyCluster(empty as i64));
    }
    ClusterAssignment::new(labels, AnnotationMethod::Manual)
}

/// Even-odd containment test; boundary points count as inside.
pub fn point_in_polygon(pt: [f64; 2], vertices: &[[f64; 2]]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    let [x, y] = pt;
    let mut inside = false;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        if on_segment(pt, a, b) {
            return true;
        }
        if (a[1] > y) != (b[1] > y) {
            let x_cross = a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let scale = ((b[0] - a[0]).abs() + (b[1] - a[1]).abs()).max(1.0);
    if cross.abs() > 1e-12 * scale * scale {
        return false;
    }
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}
