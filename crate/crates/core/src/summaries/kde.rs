//! Features grouped by their summed |phi|, with one smoothed Shapley-value
//! distribution per group and side of the feature mean.

use serde::{Deserialize, Serialize};

use super::tooltip::{feature_mean, shapley_range, Bins};
use crate::error::ModelError;
use crate::shapley::ExplanationMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeBin {
    /// Score interval `[lo, hi)`, closed on the last bin.
    pub lo: f64,
    pub hi: f64,
    pub member_features: Vec<String>,
    pub member_indices: Vec<usize>,
    pub count: usize,
    /// Density of pooled phi values whose feature value is at or above the
    /// feature mean, sampled on the shared grid; absent when no such value.
    pub curve_above: Option<Vec<f64>>,
    pub curve_below: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedKde {
    pub cluster: usize,
    /// Per-feature score: sum over explained rows of |phi|.
    pub scores: Vec<f64>,
    pub shapley_min: f64,
    pub shapley_max: f64,
    /// Evaluation points of every curve.
    pub grid: Vec<f64>,
    /// Non-empty bins only, in ascending score order.
    pub bins: Vec<KdeBin>,
}

/// Bins the features of cluster `c` by `sum |phi|` into `nbins` equal-width
/// intervals and fits a Gaussian KDE (Scott's rule) per side for each
/// non-empty bin, sampled at `points` positions over the Shapley range.
pub fn aggregated_kde(
    em: &ExplanationMatrix,
    c: usize,
    nbins: usize,
    points: usize,
) -> Result<AggregatedKde, ModelError> {
    if nbins < 1 || points < 2 {
        return Err(ModelError::BadBins(nbins.min(points)));
    }
    let slice = em.cluster_slice(c)?;
    let m = em.n_features();
    let scores: Vec<f64> = slice
        .columns()
        .into_iter()
        .map(|col| col.iter().map(|v| v.abs()).sum())
        .collect();
    let all: Vec<usize> = (0..m).collect();
    let (mut lo, mut hi) = shapley_range(em, c, &all);
    if em.n_test() == 0 {
        (lo, hi) = (0.0, 0.0);
    }
    let grid: Vec<f64> = if hi > lo {
        (0..points).map(|p| lo + (hi - lo) * p as f64 / (points - 1) as f64).collect()
    } else {
        vec![lo; points]
    };
    let floor = if hi > lo { 1e-3 * (hi - lo) } else { 1e-3 };

    let smin = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let smax = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let score_bins = Bins::new(smin, smax, nbins);
    let mut members = vec![Vec::new(); score_bins.len()];
    for (j, &s) in scores.iter().enumerate() {
        members[score_bins.index(s)].push(j);
    }

    let means: Vec<f64> = (0..m).map(|j| feature_mean(em, j)).collect();
    let mut bins = Vec::new();
    for (b, idx) in members.into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let mut above = Vec::new();
        let mut below = Vec::new();
        for &j in &idx {
            for i in 0..em.n_test() {
                let v = slice[[i, j]];
                if em.feature_values[[i, j]] >= means[j] {
                    above.push(v);
                } else {
                    below.push(v);
                }
            }
        }
        let (l, h) = score_bins.limits(b);
        bins.push(KdeBin {
            lo: l,
            hi: h,
            member_features: idx.iter().map(|&j| em.feature_names[j].clone()).collect(),
            count: idx.len(),
            member_indices: idx,
            curve_above: gaussian_kde(&above, &grid, floor),
            curve_below: gaussian_kde(&below, &grid, floor),
        });
    }
    Ok(AggregatedKde { cluster: c, scores, shapley_min: lo, shapley_max: hi, grid, bins })
}

/// Scott's-rule bandwidth `std * n^(-1/5)` with the sample standard
/// deviation, never below `floor`.
pub(crate) fn scott_bandwidth(samples: &[f64], floor: f64) -> f64 {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return floor;
    }
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (var.sqrt() * n.powf(-0.2)).max(floor)
}

fn gaussian_kde(samples: &[f64], grid: &[f64], floor: f64) -> Option<Vec<f64>> {
    if samples.is_empty() {
        return None;
    }
    let bw = scott_bandwidth(samples, floor);
    let norm = 1.0 / (samples.len() as f64 * bw * (2.0 * std::f64::consts::PI).sqrt());
    Some(
        grid.iter()
            .map(|&g| {
                norm * samples
                    .iter()
                    .map(|&s| {
                        let z = (g - s) / bw;
                        (-0.5 * z * z).exp()
                    })
                    .sum::<f64>()
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::summaries::fixtures::explanation;
    use ndarray::{Array2, Array3};

    #[test]
    fn single_feature_single_bin() {
        let phi = Array3::from_shape_fn((5, 1, 2), |(i, _, _)| i as f64 - 2.0);
        let values = Array2::from_shape_fn((5, 1), |(i, _)| i as f64);
        let kde = aggregated_kde(&explanation(phi, values), 0, 5, 64).unwrap();
        assert_eq!(kde.bins.len(), 1);
        assert_eq!(kde.bins[0].member_indices, vec![0]);
        assert_eq!(kde.bins[0].lo, kde.bins[0].hi);
        assert_eq!(kde.grid.len(), 64);
    }

    #[test]
    fn equal_scores_share_one_bin() {
        let phi = Array3::from_shape_fn((4, 3, 2), |(i, _, _)| if i % 2 == 0 { 1.0 } else { -1.0 });
        let kde = aggregated_kde(&explanation(phi, Array2::zeros((4, 3))), 1, 5, 16).unwrap();
        assert_eq!(kde.bins.len(), 1);
        assert_eq!(kde.bins[0].count, 3);
        // Every value equals its mean, so all land above.
        assert!(kde.bins[0].curve_below.is_none());
        assert!(kde.bins[0].curve_above.is_some());
    }

    #[test]
    fn only_non_empty_bins_are_emitted() {
        // Scores 0.3, 0.3, 0.3 and 3.0: one isolated feature on top.
        let phi = Array3::from_shape_fn((3, 4, 2), |(_, j, _)| if j == 2 { 1.0 } else { 0.1 });
        let values = Array2::from_shape_fn((3, 4), |(i, _)| i as f64);
        let kde = aggregated_kde(&explanation(phi, values), 0, 5, 64).unwrap();
        assert_eq!(kde.bins.len(), 2);
        assert_eq!(kde.bins[0].member_indices, vec![0, 1, 3]);
        assert_eq!(kde.bins[1].member_indices, vec![2]);
        for b in &kde.bins {
            assert_eq!(b.count, b.member_features.len());
        }
        assert!(kde.bins[1].hi == 3.0);
    }

    #[test]
    fn curves_integrate_to_about_one() {
        let phi = Array3::from_shape_fn((40, 1, 2), |(i, _, _)| (i as f64 * 0.37).sin());
        let values = Array2::from_shape_fn((40, 1), |(i, _)| i as f64);
        let em = explanation(phi, values);
        // A wide grid so the tails are captured.
        let samples: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let grid: Vec<f64> = (0..2001).map(|p| -3.0 + 6.0 * p as f64 / 2000.0).collect();
        let curve = gaussian_kde(&samples, &grid, 1e-3).unwrap();
        let area: f64 = curve.iter().sum::<f64>() * 6.0 / 2000.0;
        assert!((area - 1.0).abs() < 1e-3, "{area}");
        assert!(aggregated_kde(&em, 0, 5, 64).is_ok());
    }

    #[test]
    fn bandwidth_follows_scott_rule() {
        let s = [1.0, 2.0, 3.0, 4.0];
        let std = (5.0f64 / 3.0).sqrt();
        assert!((scott_bandwidth(&s, 1e-3) - std * 4f64.powf(-0.2)).abs() < 1e-15);
        assert_eq!(scott_bandwidth(&[2.0, 2.0], 0.5), 0.5);
    }
}
