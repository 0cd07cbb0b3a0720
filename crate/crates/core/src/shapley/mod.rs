//! Shapley-value estimation for the cluster-probability model.
//!
//! Absent features are marginalised interventionally: they take their value
//! from each row of a background set drawn from the training split, and the
//! model outputs are averaged over those rows.

mod exact;
mod explain;
mod kernel;
mod sampling;

pub use exact::{exact_shapley, EXACT_MAX_FEATURES};
pub use explain::{default_budget, explain_all, explain_all_with_progress, split, ExplainConfig, ExplanationMatrix, Split};
pub use kernel::{kernel_shap_explain, KernelShapPlan};
pub use sampling::{kernel_weight, sample_coalitions, CoalitionSample};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cluster_model::CentroidSet;
use crate::error::ModelError;

/// A subset of features that keep the explained sample's values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Coalition {
    mask: Vec<bool>,
    size: usize,
}

impl Coalition {
    pub fn from_mask(mask: Vec<bool>) -> Self {
        let size = mask.iter().filter(|&&b| b).count();
        Self { mask, size }
    }

    /// Features listed in `members` present, all others absent.
    pub fn from_members(m: usize, members: &[usize]) -> Self {
        let mut mask = vec![false; m];
        for &j in members {
            mask[j] = true;
        }
        Self::from_mask(mask)
    }

    /// Bit `j` of `bits` set means feature `j` is present.
    pub fn from_bits(m: usize, bits: u64) -> Self {
        Self::from_mask((0..m).map(|j| bits >> j & 1 == 1).collect())
    }

    pub fn empty(m: usize) -> Self {
        Self::from_mask(vec![false; m])
    }

    pub fn full(m: usize) -> Self {
        Self::from_mask(vec![true; m])
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn n_features(&self) -> usize {
        self.mask.len()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.mask[j]
    }
}

/// Reference rows used to fill in absent features.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundSet {
    rows: Array2<f64>,
}

impl BackgroundSet {
    pub fn new(rows: Array2<f64>) -> Result<Self, ModelError> {
        if rows.nrows() == 0 {
            return Err(ModelError::EmptyBackground);
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn n_features(&self) -> usize {
        self.rows.ncols()
    }
}

/// Evaluates the coalition game for one explained sample, reusing buffers
/// across calls.
pub(crate) struct Marginalizer<'a> {
    cs: &'a CentroidSet,
    bg: &'a [f64],
    m: usize,
    n_bg: usize,
    hybrid: Vec<f64>,
    probs: Vec<f64>,
}

impl<'a> Marginalizer<'a> {
    pub(crate) fn new(cs: &'a CentroidSet, bg: &'a BackgroundSet) -> Self {
        let m = cs.n_features();
        Self {
            cs,
            bg: bg.rows.as_slice().expect("background rows are contiguous"),
            m,
            n_bg: bg.len(),
            hybrid: vec![0.0; m],
            probs: vec![0.0; cs.k()],
        }
    }

    /// Mean model output over the background with `mask` features taken from `x`.
    pub(crate) fn value(&mut self, x: &[f64], mask: &[bool], out: &mut [f64]) {
        if mask.iter().all(|&b| b) {
            self.cs.probability_into(x, out);
            return;
        }
        out.fill(0.0);
        for b in 0..self.n_bg {
            let row = &self.bg[b * self.m..(b + 1) * self.m];
            for j in 0..self.m {
                self.hybrid[j] = if mask[j] { x[j] } else { row[j] };
            }
            self.cs.probability_into(&self.hybrid, &mut self.probs);
            for (o, p) in out.iter_mut().zip(&self.probs) {
                *o += p;
            }
        }
        let inv = 1.0 / self.n_bg as f64;
        for o in out.iter_mut() {
            *o *= inv;
        }
    }
}

pub(crate) fn check_dims(cs: &CentroidSet, x: &[f64], bg: &BackgroundSet) -> Result<(), ModelError> {
    let m = cs.n_features();
    if x.len() != m {
        return Err(ModelError::DimensionMismatch { expected: m, got: x.len() });
    }
    if bg.n_features() != m {
        return Err(ModelError::DimensionMismatch { expected: m, got: bg.n_features() });
    }
    Ok(())
}

/// Interventional expectation of the model output when only the features in
/// `z` keep the values of `x`.
pub fn marginalize(
    cs: &CentroidSet,
    x: &[f64],
    z: &Coalition,
    bg: &BackgroundSet,
) -> Result<Vec<f64>, ModelError> {
    check_dims(cs, x, bg)?;
    if z.n_features() != cs.n_features() {
        return Err(ModelError::DimensionMismatch {
            expected: cs.n_features(),
            got: z.n_features(),
        });
    }
    let mut out = vec![0.0; cs.k()];
    Marginalizer::new(cs, bg).value(x, z.mask(), &mut out);
    Ok(out)
}
