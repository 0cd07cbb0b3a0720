//! Explaining every held-out row of an annotated dataset.

use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array2, Array3, ArrayView2};
use rand::seq::{index, SliceRandom};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::KernelShapPlan;
use super::sampling::proper_coalitions;
use super::{BackgroundSet, Marginalizer};
use crate::annotation::ClusterAssignment;
use crate::cluster_model::CentroidSet;
use crate::dataset::Dataset;
use crate::error::ModelError;

const SPLIT_STREAM: u64 = 1;
const BACKGROUND_STREAM: u64 = 2;
const COALITION_STREAM: u64 = 3;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    /// Share of every cluster held out and explained.
    pub fraction: f64,
    pub seed: u64,
    /// Coalitions per row; `None` uses [`default_budget`].
    pub budget: Option<usize>,
    /// Maximum number of background rows drawn from the training split.
    pub background: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self { fraction: 0.2, seed: 42, budget: None, background: 100 }
    }
}

/// `min(2^m - 2, 2m + 2048)`.
pub fn default_budget(m: usize) -> usize {
    proper_coalitions(m).min(2 * m + 2048)
}

/// Row indices of the training and held-out parts, each sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split: every cluster sends `round(fraction * size)` rows to the
/// test part, at least one and at most `size - 1`. Unassigned rows are left
/// out of both parts.
pub fn split(
    d: &Dataset,
    a: &ClusterAssignment,
    fraction: f64,
    seed: u64,
) -> Result<Split, ModelError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ModelError::BadFraction(fraction));
    }
    if a.len() != d.n_rows() {
        return Err(ModelError::DimensionMismatch { expected: d.n_rows(), got: a.len() });
    }
    let mut rng = rng(seed, SPLIT_STREAM);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..a.k() {
        let mut members = a.members(c);
        let size = members.len();
        if size < 2 {
            return Err(ModelError::ClusterTooSmall { cluster: c, size });
        }
        let n_test = ((fraction * size as f64).round() as usize).clamp(1, size - 1);
        members.shuffle(&mut rng);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Shapley values of every explained row toward every cluster output.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationMatrix {
    pub feature_names: Vec<String>,
    /// n_test x m x K.
    pub phi: Array3<f64>,
    /// Mean model output over the background, per cluster.
    pub base: Vec<f64>,
    /// n_test x K model outputs.
    pub fx: Array2<f64>,
    pub test_indices: Vec<usize>,
    /// Cluster of each explained row.
    pub test_labels: Vec<usize>,
    /// n_test x m raw feature values of the explained rows.
    pub feature_values: Array2<f64>,
    pub background_indices: Vec<usize>,
    /// Coalitions evaluated per row.
    pub budget: usize,
}

impl ExplanationMatrix {
    pub fn n_test(&self) -> usize {
        self.phi.shape()[0]
    }

    pub fn n_features(&self) -> usize {
        self.phi.shape()[1]
    }

    pub fn k(&self) -> usize {
        self.phi.shape()[2]
    }

    /// The n_test x m matrix of values toward cluster `c`.
    pub fn cluster_slice(&self, c: usize) -> Result<ArrayView2<'_, f64>, ModelError> {
        if c >= self.k() {
            return Err(ModelError::BadCluster(c));
        }
        Ok(self.phi.index_axis(ndarray::Axis(2), c))
    }

    /// Largest `|sum_j phi[i,j,c] + base[c] - fx[i,c]|` over all rows and outputs.
    pub fn local_accuracy_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n_test() {
            for c in 0..self.k() {
                let total: f64 = (0..self.n_features()).map(|j| self.phi[[i, j, c]]).sum();
                worst = worst.max((total + self.base[c] - self.fx[[i, c]]).abs());
            }
        }
        worst
    }
}

/// Explains every test row of the stratified split. See [`explain_all_with_progress`].
pub fn explain_all(
    d: &Dataset,
    a: &ClusterAssignment,
    cs: &CentroidSet,
    config: &ExplainConfig,
) -> Result<ExplanationMatrix, ModelError> {
    explain_all_with_progress(d, a, cs, config, None)
}

/// Like [`explain_all`], incrementing `progress` once per finished row.
///
/// Rows run in parallel on the current rayon pool. A singular regression is
/// retried with twice the budget until full enumeration is reached.
pub fn explain_all_with_progress(
    d: &Dataset,
    a: &ClusterAssignment,
    cs: &CentroidSet,
    config: &ExplainConfig,
    progress: Option<&AtomicUsize>,
) -> Result<ExplanationMatrix, ModelError> {
    let m = d.n_features();
    if cs.n_features() != m {
        return Err(ModelError::DimensionMismatch { expected: m, got: cs.n_features() });
    }
    if config.background == 0 {
        return Err(ModelError::EmptyBackground);
    }
    let parts = split(d, a, config.fraction, config.seed)?;

    let background_indices = if parts.train.len() > config.background {
        let mut r = rng(config.seed, BACKGROUND_STREAM);
        let mut picked: Vec<usize> = index::sample(&mut r, parts.train.len(), config.background)
            .into_iter()
            .map(|i| parts.train[i])
            .collect();
        picked.sort_unstable();
        picked
    } else {
        parts.train.clone()
    };
    let bg = BackgroundSet::new(d.rows().select(ndarray::Axis(0), &background_indices))?;

    let coalition_seed = rng(config.seed, COALITION_STREAM).next_u64();
    let full = proper_coalitions(m);
    let mut budget = config.budget.unwrap_or_else(|| default_budget(m));
    let plan = loop {
        match KernelShapPlan::new(m, budget, coalition_seed) {
            Err(ModelError::SingularSystem) if budget < full => {
                budget = budget.saturating_mul(2).min(full);
            }
            other => break other?,
        }
    };

    let k = cs.k();
    let mut base = vec![0.0; k];
    Marginalizer::new(cs, &bg).value(&vec![0.0; m], &vec![false; m], &mut base);

    let rows: Vec<(Array2<f64>, Vec<f64>)> = parts
        .test
        .par_iter()
        .map(|&i| {
            let x = d.row(i).to_vec();
            let mut marg = Marginalizer::new(cs, &bg);
            let mut fx = vec![0.0; k];
            cs.probability_into(&x, &mut fx);
            let phi = plan.solve(&mut marg, &x, &base, &fx);
            if let Some(p) = progress {
                p.fetch_add(1, Ordering::Relaxed);
            }
            (phi, fx)
        })
        .collect();

    let n_test = parts.test.len();
    let mut phi = Array3::zeros((n_test, m, k));
    let mut fx = Array2::zeros((n_test, k));
    for (i, (row_phi, row_fx)) in rows.into_iter().enumerate() {
        phi.index_axis_mut(ndarray::Axis(0), i).assign(&row_phi);
        for c in 0..k {
            fx[[i, c]] = row_fx[c];
        }
    }
    let test_labels = parts.test.iter().map(|&i| a.labels()[i] as usize).collect();
    Ok(ExplanationMatrix {
        feature_names: d.feature_names().to_vec(),
        phi,
        base,
        fx,
        feature_values: d.rows().select(ndarray::Axis(0), &parts.test),
        test_indices: parts.test,
        test_labels,
        background_indices,
        budget: plan.n_coalitions(),
    })
}
