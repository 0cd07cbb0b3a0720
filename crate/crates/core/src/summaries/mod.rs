//! Serializable summaries of an explanation: tooltip histograms, dot plots,
//! aggregated KDE bins, the importance summary and the ordered heatmap.

mod kde;
mod olo;
mod tooltip;

pub use kde::{aggregated_kde, AggregatedKde, KdeBin};
pub use olo::{adjacent_cost, optimal_leaf_order};
pub use tooltip::{
    dot_plot, interleaved_histograms, DotPlotData, DotPlotFeature, DotPoint, HistogramSlot,
    InterleavedHistogram, Side,
};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::hierarchy::{linkage, DistanceMatrix, Linkage};
use crate::shapley::ExplanationMatrix;

/// Number of features shown per cluster.
pub const TOP_FEATURES: usize = 4;

/// Mean |phi| of every feature toward cluster `c` over all explained rows.
pub fn mean_abs(em: &ExplanationMatrix, c: usize) -> Result<Vec<f64>, ModelError> {
    let slice = em.cluster_slice(c)?;
    let n = em.n_test().max(1) as f64;
    Ok(slice
        .columns()
        .into_iter()
        .map(|col| col.iter().map(|v| v.abs()).sum::<f64>() / n)
        .collect())
}

/// Feature indices by descending mean |phi| toward cluster `c`, ties broken
/// by ascending index.
pub fn rank_features(em: &ExplanationMatrix, c: usize) -> Result<Vec<usize>, ModelError> {
    let scores = mean_abs(em, c)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(order)
}

/// The first `min(4, m)` entries of [`rank_features`].
pub fn top_features(em: &ExplanationMatrix, c: usize) -> Result<Vec<usize>, ModelError> {
    let mut order = rank_features(em, c)?;
    order.truncate(TOP_FEATURES);
    Ok(order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub feature_index: usize,
    pub mean_abs: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterImportance {
    pub cluster: usize,
    pub features: Vec<FeatureImportance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceSummary {
    pub clusters: Vec<ClusterImportance>,
}

/// Top features of every cluster with their mean |phi| and share of the
/// cluster's selected total. A cluster whose selected features all have zero
/// importance splits the bar evenly.
pub fn importance_summary(em: &ExplanationMatrix) -> Result<ImportanceSummary, ModelError> {
    let mut clusters = Vec::with_capacity(em.k());
    for c in 0..em.k() {
        let scores = mean_abs(em, c)?;
        let top = top_features(em, c)?;
        let total: f64 = top.iter().map(|&j| scores[j]).sum();
        let features = top
            .iter()
            .map(|&j| FeatureImportance {
                feature: em.feature_names[j].clone(),
                feature_index: j,
                mean_abs: scores[j],
                share: if total > 0.0 { scores[j] / total } else { 1.0 / top.len() as f64 },
            })
            .collect();
        clusters.push(ClusterImportance { cluster: c, features });
    }
    Ok(ImportanceSummary { clusters })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceHeatmap {
    /// Column features, in ascending feature index.
    pub features: Vec<String>,
    pub feature_indices: Vec<usize>,
    /// `cells[c][col]` = sum over explained rows of |phi| toward cluster `c`.
    pub cells: Vec<Vec<f64>>,
    pub row_order: Vec<usize>,
    pub col_order: Vec<usize>,
}

/// Cluster x feature matrix of summed |phi| over the union of every
/// cluster's top features, with rows and columns ordered by average-linkage
/// clustering and optimal leaf ordering.
pub fn importance_heatmap(em: &ExplanationMatrix) -> Result<ImportanceHeatmap, ModelError> {
    let k = em.k();
    if k < 2 {
        return Err(ModelError::TooFewClusters(k));
    }
    let mut cols: Vec<usize> = Vec::new();
    for c in 0..k {
        cols.extend(top_features(em, c)?);
    }
    cols.sort_unstable();
    cols.dedup();
    let mut cells = vec![vec![0.0; cols.len()]; k];
    for (c, row) in cells.iter_mut().enumerate() {
        let slice = em.cluster_slice(c)?;
        for (slot, &j) in row.iter_mut().zip(&cols) {
            *slot = slice.column(j).iter().map(|v| v.abs()).sum();
        }
    }
    let transposed: Vec<Vec<f64>> =
        (0..cols.len()).map(|j| cells.iter().map(|r| r[j]).collect()).collect();
    Ok(ImportanceHeatmap {
        features: cols.iter().map(|&j| em.feature_names[j].clone()).collect(),
        feature_indices: cols,
        row_order: ordered_leaves(&cells)?,
        col_order: ordered_leaves(&transposed)?,
        cells,
    })
}

fn ordered_leaves(points: &[Vec<f64>]) -> Result<Vec<usize>, ModelError> {
    let dist = DistanceMatrix::euclidean(points);
    if dist.len() < 2 {
        return Ok((0..dist.len()).collect());
    }
    optimal_leaf_order(&linkage(&dist, Linkage::Average), &dist)
}

/// Knobs for [`summarize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummaryConfig {
    pub histogram_bins: usize,
    pub kde_bins: usize,
    pub kde_points: usize,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        Self { histogram_bins: 20, kde_bins: 4, kde_points: 64 }
    }
}

/// Per-cluster views shown when a cluster is selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    /// All features, most important first.
    pub ranking: Vec<usize>,
    pub histograms: Vec<InterleavedHistogram>,
    pub dot_plot: DotPlotData,
    pub kde: AggregatedKde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryArtifacts {
    pub clusters: Vec<ClusterSummary>,
    pub importance: ImportanceSummary,
    pub heatmap: ImportanceHeatmap,
}

/// Every summary of `em`.
pub fn summarize(em: &ExplanationMatrix, cfg: &SummaryConfig) -> Result<SummaryArtifacts, ModelError> {
    let clusters = (0..em.k())
        .map(|c| {
            Ok(ClusterSummary {
                cluster: c,
                ranking: rank_features(em, c)?,
                histograms: interleaved_histograms(em, c, cfg.histogram_bins)?,
                dot_plot: dot_plot(em, c, cfg.histogram_bins)?,
                kde: aggregated_kde(em, c, cfg.kde_bins, cfg.kde_points)?,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(SummaryArtifacts {
        clusters,
        importance: importance_summary(em)?,
        heatmap: importance_heatmap(em)?,
    })
}


#[cfg(test)]
mod tests {
    use super::fixtures::explanation;
    use super::*;
    use ndarray::{Array2, Array3};
    use proptest::prelude::*;

    #[test]
    fn zero_phi_ranks_by_index() {
        let em = explanation(Array3::zeros((3, 5, 2)), Array2::zeros((3, 5)));
        assert_eq!(rank_features(&em, 1).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(top_features(&em, 0).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(rank_features(&em, 2).unwrap_err(), ModelError::BadCluster(2));
    }

    #[test]
    fn single_feature_summary_has_full_share() {
        let phi = Array3::from_shape_fn((4, 1, 2), |(i, _, c)| i as f64 - c as f64);
        let em = explanation(phi, Array2::zeros((4, 1)));
        let s = importance_summary(&em).unwrap();
        for cl in &s.clusters {
            assert_eq!(cl.features.len(), 1);
            assert_eq!(cl.features[0].share, 1.0);
        }
    }

    #[test]
    fn heatmap_two_by_two_is_optimal() {
        let phi = Array3::from_shape_fn((3, 2, 2), |(i, j, c)| (i + 2 * j + 3 * c) as f64 * 0.1);
        let em = explanation(phi, Array2::zeros((3, 2)));
        let h = importance_heatmap(&em).unwrap();
        assert_eq!(h.cells.len(), 2);
        assert_eq!(h.features, vec!["f0", "f1"]);
        let mut r = h.row_order.clone();
        r.sort_unstable();
        assert_eq!(r, vec![0, 1]);
        // With two leaves both orders cost the same, so identity wins.
        assert_eq!(h.row_order, vec![0, 1]);
        assert_eq!(h.col_order, vec![0, 1]);
    }

    #[test]
    fn heatmap_needs_two_clusters() {
        let em = explanation(Array3::zeros((2, 2, 1)), Array2::zeros((2, 2)));
        assert_eq!(importance_heatmap(&em).unwrap_err(), ModelError::TooFewClusters(1));
    }

    fn random_em() -> impl Strategy<Value = ExplanationMatrix> {
        (1usize..12, 1usize..9, 2usize..5).prop_flat_map(|(n, m, k)| {
            (
                proptest::collection::vec(-2.0f64..2.0, n * m * k),
                proptest::collection::vec(-5.0f64..5.0, n * m),
            )
                .prop_map(move |(p, v)| {
                    explanation(
                        Array3::from_shape_vec((n, m, k), p).unwrap(),
                        Array2::from_shape_vec((n, m), v).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn shares_sum_to_one(em in random_em()) {
            for cl in importance_summary(&em).unwrap().clusters {
                let total: f64 = cl.features.iter().map(|f| f.share).sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
                prop_assert_eq!(cl.features.len(), em.n_features().min(4));
            }
        }

        #[test]
        fn ranking_ignores_positive_rescaling(em in random_em(), scale in 0.01f64..100.0) {
            let mut scaled = em.clone();
            scaled.phi.mapv_inplace(|v| v * scale);
            for c in 0..em.k() {
                // Rescaling may break exact float ties differently, so compare
                // on rankings whose scores are well separated.
                let s = mean_abs(&em, c).unwrap();
                let mut sorted = s.clone();
                sorted.sort_by(|a, b| b.total_cmp(a));
                let separated = sorted.windows(2).all(|w| w[0] - w[1] > 1e-9 || w[0] == w[1]);
                if separated {
                    prop_assert_eq!(rank_features(&em, c).unwrap(), rank_features(&scaled, c).unwrap());
                }
            }
        }

        #[test]
        fn heatmap_orders_are_permutations_and_beat_natural(em in random_em()) {
            let h = importance_heatmap(&em).unwrap();
            let mut r = h.row_order.clone();
            r.sort_unstable();
            prop_assert_eq!(r, (0..em.k()).collect::<Vec<_>>());
            let mut c = h.col_order.clone();
            c.sort_unstable();
            prop_assert_eq!(c, (0..h.features.len()).collect::<Vec<_>>());
            let dist = DistanceMatrix::euclidean(&h.cells);
            let natural = linkage(&dist, Linkage::Average).natural_order();
            prop_assert!(adjacent_cost(&h.row_order, &dist) <= adjacent_cost(&natural, &dist));
        }

        #[test]
        fn heatmap_cells_ignore_row_permutation(em in random_em(), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let n = em.n_test();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let mut shuffled = em.clone();
            for (dst, &src) in perm.iter().enumerate() {
                shuffled.phi.index_axis_mut(ndarray::Axis(0), dst)
                    .assign(&em.phi.index_axis(ndarray::Axis(0), src));
            }
            let a = importance_heatmap(&em).unwrap();
            let b = importance_heatmap(&shuffled).unwrap();
            prop_assert_eq!(&a.features, &b.features);
            for (ra, rb) in a.cells.iter().zip(&b.cells) {
                for (x, y) in ra.iter().zip(rb) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}
