//! Tooltip histograms and dot-plot data for one cluster.

use serde::{Deserialize, Serialize};

use super::top_features;
use crate::error::ModelError;
use crate::shapley::ExplanationMatrix;

/// Whether a sample's feature value is at or above the feature's mean over
/// the explained rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    AboveMean,
    BelowMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSlot {
    /// Shapley-value interval `[lo, hi)` of the bin (closed on the last bin).
    pub lo: f64,
    pub hi: f64,
    pub side: Side,
    pub count: usize,
    /// `count` divided by the largest count over both sides of the feature.
    pub density: f64,
    /// Only this bin's other side is empty, so the slot may span both positions.
    pub wide: bool,
}

/// Above-mean and below-mean histograms of one feature's Shapley values,
/// interleaved: slot `2b` is the above-mean bin `b`, slot `2b + 1` the
/// below-mean one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterleavedHistogram {
    pub feature: String,
    pub feature_index: usize,
    pub feature_mean: f64,
    pub shapley_min: f64,
    pub shapley_max: f64,
    pub slots: Vec<HistogramSlot>,
}

/// Smallest and largest phi toward `c` over the given features.
pub(crate) fn shapley_range(em: &ExplanationMatrix, c: usize, features: &[usize]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &j in features {
        for i in 0..em.n_test() {
            let v = em.phi[[i, j, c]];
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

pub(crate) fn feature_mean(em: &ExplanationMatrix, j: usize) -> f64 {
    em.feature_values.column(j).mean().unwrap_or(0.0)
}

/// Equal-width bins over `[lo, hi]`; a zero-width range is one bin.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Bins {
    lo: f64,
    hi: f64,
    n: usize,
}

impl Bins {
    pub(crate) fn new(lo: f64, hi: f64, n: usize) -> Self {
        Self { lo, hi, n: if hi > lo { n } else { 1 } }
    }

    pub(crate) fn len(&self) -> usize {
        self.n
    }

    pub(crate) fn index(&self, v: f64) -> usize {
        if self.n == 1 {
            return 0;
        }
        let t = (v - self.lo) / (self.hi - self.lo) * self.n as f64;
        (t.floor().max(0.0) as usize).min(self.n - 1)
    }

    pub(crate) fn limits(&self, b: usize) -> (f64, f64) {
        if self.n == 1 {
            return (self.lo, self.hi);
        }
        let w = (self.hi - self.lo) / self.n as f64;
        let hi = if b + 1 == self.n { self.hi } else { self.lo + w * (b + 1) as f64 };
        (self.lo + w * b as f64, hi)
    }
}

/// Tooltip histograms for the top features of cluster `c`, all sharing the
/// Shapley-value range of those features.
pub fn interleaved_histograms(
    em: &ExplanationMatrix,
    c: usize,
    nbins: usize,
) -> Result<Vec<InterleavedHistogram>, ModelError> {
    if nbins < 2 {
        return Err(ModelError::BadBins(nbins));
    }
    let top = top_features(em, c)?;
    if em.n_test() == 0 {
        return Err(ModelError::EmptyCluster);
    }
    let (lo, hi) = shapley_range(em, c, &top);
    let bins = Bins::new(lo, hi, nbins);
    let mut out = Vec::with_capacity(top.len());
    for &j in &top {
        let mean = feature_mean(em, j);
        let mut above = vec![0usize; bins.len()];
        let mut below = vec![0usize; bins.len()];
        for i in 0..em.n_test() {
            let b = bins.index(em.phi[[i, j, c]]);
            if em.feature_values[[i, j]] >= mean {
                above[b] += 1;
            } else {
                below[b] += 1;
            }
        }
        let peak = above.iter().chain(&below).copied().max().unwrap_or(0).max(1) as f64;
        let mut slots = Vec::with_capacity(2 * bins.len());
        for b in 0..bins.len() {
            let (l, h) = bins.limits(b);
            let wide = (above[b] == 0) != (below[b] == 0);
            for (side, count) in [(Side::AboveMean, above[b]), (Side::BelowMean, below[b])] {
                slots.push(HistogramSlot {
                    lo: l,
                    hi: h,
                    side,
                    count,
                    density: count as f64 / peak,
                    wide,
                });
            }
        }
        out.push(InterleavedHistogram {
            feature: em.feature_names[j].clone(),
            feature_index: j,
            feature_mean: mean,
            shapley_min: lo,
            shapley_max: hi,
            slots,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotPoint {
    pub shapley: f64,
    pub feature_value: f64,
    /// Row of the dataset, for linking back to the scatter plot.
    pub row_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotPlotFeature {
    pub feature: String,
    pub feature_index: usize,
    pub mean_abs: f64,
    pub points: Vec<DotPoint>,
    /// Point counts over equal-width bins of `[shapley_min, shapley_max]`.
    pub density: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotPlotData {
    pub cluster: usize,
    pub shapley_min: f64,
    pub shapley_max: f64,
    pub features: Vec<DotPlotFeature>,
}

/// One dot per explained row for each top feature of cluster `c`, with a
/// density strip of `nbins` bins on the shared Shapley axis.
pub fn dot_plot(em: &ExplanationMatrix, c: usize, nbins: usize) -> Result<DotPlotData, ModelError> {
    if nbins < 2 {
        return Err(ModelError::BadBins(nbins));
    }
    let top = top_features(em, c)?;
    if em.n_test() == 0 {
        return Err(ModelError::EmptyCluster);
    }
    let (lo, hi) = shapley_range(em, c, &top);
    let bins = Bins::new(lo, hi, nbins);
    let scores = super::mean_abs(em, c)?;
    let features = top
        .iter()
        .map(|&j| {
            let mut density = vec![0usize; bins.len()];
            let points = (0..em.n_test())
                .map(|i| {
                    let v = em.phi[[i, j, c]];
                    density[bins.index(v)] += 1;
                    DotPoint {
                        shapley: v,
                        feature_value: em.feature_values[[i, j]],
                        row_id: em.test_indices[i],
                    }
                })
                .collect();
            DotPlotFeature {
                feature: em.feature_names[j].clone(),
                feature_index: j,
                mean_abs: scores[j],
                points,
                density,
            }
        })
        .collect();
    Ok(DotPlotData { cluster: c, shapley_min: lo, shapley_max: hi, features })
}
