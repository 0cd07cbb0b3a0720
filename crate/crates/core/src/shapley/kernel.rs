//! KernelSHAP: Shapley values as the solution of a weighted least-squares fit
//! over coalitions, with the empty and full coalitions as hard constraints.
//!
//! The efficiency constraint is eliminated by substituting
//! `phi[m-1] = (f(x) - base) - sum(phi[..m-1])`, which leaves an unconstrained
//! (m-1)-dimensional problem. The coalition sample and weights do not depend
//! on the explained row, so the reduced normal matrix is factored once per plan.

use ndarray::Array2;

use super::sampling::{sample_coalitions, CoalitionSample};
use super::{check_dims, BackgroundSet, Marginalizer};
use crate::cluster_model::CentroidSet;
use crate::error::ModelError;
use crate::linalg::Cholesky;

/// Pivots below this fraction of the largest diagonal entry are singular.
const SINGULAR_TOL: f64 = 1e-12;

/// A coalition sample with its factored reduced normal matrix, reusable for
/// every row explained with the same feature count, budget and seed.
#[derive(Debug, Clone)]
pub struct KernelShapPlan {
    m: usize,
    sample: Option<CoalitionSample>,
    factor: Option<Cholesky>,
}

impl KernelShapPlan {
    pub fn new(m: usize, budget: usize, seed: u64) -> Result<Self, ModelError> {
        if m == 0 {
            return Err(ModelError::DimensionMismatch { expected: 1, got: 0 });
        }
        if m == 1 {
            return Ok(Self { m, sample: None, factor: None });
        }
        let sample = sample_coalitions(m, budget, seed)?;
        let r = m - 1;
        let mut normal = Array2::<f64>::zeros((r, r));
        let mut row = vec![0.0; r];
        for (z, &w) in sample.coalitions.iter().zip(&sample.weights) {
            reduced_row(z.mask(), &mut row);
            for a in 0..r {
                if row[a] == 0.0 {
                    continue;
                }
                let wa = w * row[a];
                for b in 0..r {
                    normal[[a, b]] += wa * row[b];
                }
            }
        }
        let factor = Cholesky::factor(&normal, SINGULAR_TOL).ok_or(ModelError::SingularSystem)?;
        Ok(Self { m, sample: Some(sample), factor: Some(factor) })
    }

    pub fn n_features(&self) -> usize {
        self.m
    }

    /// Number of coalitions evaluated per explained row, excluding the two
    /// constraint coalitions.
    pub fn n_coalitions(&self) -> usize {
        self.sample.as_ref().map_or(0, |s| s.len())
    }

    pub fn is_complete(&self) -> bool {
        self.sample.as_ref().map_or(true, |s| s.complete)
    }

    /// Shapley values (m x K) of `x` given the precomputed `base` and model
    /// output `fx`.
    pub(crate) fn solve(
        &self,
        marg: &mut Marginalizer<'_>,
        x: &[f64],
        base: &[f64],
        fx: &[f64],
    ) -> Array2<f64> {
        let m = self.m;
        let k = base.len();
        let mut phi = Array2::zeros((m, k));
        let (Some(sample), Some(factor)) = (&self.sample, &self.factor) else {
            for c in 0..k {
                phi[[0, c]] = fx[c] - base[c];
            }
            return phi;
        };
        let r = m - 1;
        let delta: Vec<f64> = fx.iter().zip(base).map(|(f, b)| f - b).collect();
        let mut rhs = vec![vec![0.0; r]; k];
        let mut row = vec![0.0; r];
        let mut v = vec![0.0; k];
        for (z, &w) in sample.coalitions.iter().zip(&sample.weights) {
            marg.value(x, z.mask(), &mut v);
            reduced_row(z.mask(), &mut row);
            let last = if z.contains(r) { 1.0 } else { 0.0 };
            for c in 0..k {
                let y = v[c] - base[c] - last * delta[c];
                let wy = w * y;
                for (acc, &xa) in rhs[c].iter_mut().zip(&row) {
                    *acc += wy * xa;
                }
            }
        }
        for c in 0..k {
            let sol = factor.solve(&rhs[c]);
            let mut rest = delta[c];
            for (j, s) in sol.iter().enumerate() {
                phi[[j, c]] = *s;
                rest -= s;
            }
            phi[[r, c]] = rest;
        }
        phi
    }
}

/// Design row after eliminating the last unknown: `z_j - z_{m-1}`.
fn reduced_row(mask: &[bool], out: &mut [f64]) {
    let last = mask[mask.len() - 1] as i8;
    for (o, &present) in out.iter_mut().zip(mask) {
        *o = (present as i8 - last) as f64;
    }
}

/// Explains one row: returns `(phi, base, fx)` with `phi` of shape m x K.
pub fn kernel_shap_explain(
    cs: &CentroidSet,
    x: &[f64],
    bg: &BackgroundSet,
    budget: usize,
    seed: u64,
) -> Result<(Array2<f64>, Vec<f64>, Vec<f64>), ModelError> {
    check_dims(cs, x, bg)?;
    let plan = KernelShapPlan::new(cs.n_features(), budget, seed)?;
    let mut marg = Marginalizer::new(cs, bg);
    let k = cs.k();
    let mut base = vec![0.0; k];
    marg.value(x, &vec![false; cs.n_features()], &mut base);
    let mut fx = vec![0.0; k];
    cs.probability_into(x, &mut fx);
    let phi = plan.solve(&mut marg, x, &base, &fx);
    Ok((phi, base, fx))
}
