//! Exact Shapley values by full subset enumeration.

use ndarray::Array2;

use super::{check_dims, BackgroundSet, Marginalizer};
use crate::cluster_model::CentroidSet;
use crate::error::ModelError;

/// Largest feature count accepted by [`exact_shapley`] (2^15 game evaluations).
pub const EXACT_MAX_FEATURES: usize = 15;

/// Shapley values of every feature toward every cluster output, as an
/// m x K matrix.
///
/// `phi[j, c] = sum over S not containing j of |S|!(m-|S|-1)!/m! * (v(S+j) - v(S))`
/// where `v` is the interventional expectation over `bg`.
pub fn exact_shapley(
    cs: &CentroidSet,
    x: &[f64],
    bg: &BackgroundSet,
) -> Result<Array2<f64>, ModelError> {
    check_dims(cs, x, bg)?;
    let m = cs.n_features();
    if m > EXACT_MAX_FEATURES {
        return Err(ModelError::TooManyFeatures { m, max: EXACT_MAX_FEATURES });
    }
    let k = cs.k();
    let n_sets = 1usize << m;
    let mut values = vec![0.0; n_sets * k];
    let mut marg = Marginalizer::new(cs, bg);
    let mut mask = vec![false; m];
    for bits in 0..n_sets {
        for (j, slot) in mask.iter_mut().enumerate() {
            *slot = bits >> j & 1 == 1;
        }
        marg.value(x, &mask, &mut values[bits * k..(bits + 1) * k]);
    }

    // weight[s] = s!(m-s-1)!/m!
    let weight: Vec<f64> = (0..m)
        .map(|s| {
            let mut w = 1.0 / m as f64;
            for i in 1..=s {
                w *= i as f64 / (m - i) as f64;
            }
            w
        })
        .collect();

    let mut phi = Array2::zeros((m, k));
    for j in 0..m {
        let bit = 1usize << j;
        for bits in (0..n_sets).filter(|b| b & bit == 0) {
            let w = weight[bits.count_ones() as usize];
            let with = (bits | bit) * k;
            let without = bits * k;
            for c in 0..k {
                phi[[j, c]] += w * (values[with + c] - values[without + c]);
            }
        }
    }
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_player_gets_everything() {
        let cs = CentroidSet::new(array![[0.0], [3.0]]).unwrap();
        let bg = BackgroundSet::new(array![[1.0], [5.0]]).unwrap();
        let x = [2.5];
        let phi = exact_shapley(&cs, &x, &bg).unwrap();
        let fx = cs.probability(&x).unwrap();
        let base = super::super::marginalize(&cs, &x, &super::super::Coalition::empty(1), &bg).unwrap();
        for c in 0..2 {
            assert!((phi[[0, c]] - (fx[c] - base[c])).abs() < 1e-15);
        }
    }

    #[test]
    fn efficiency() {
        let cs = CentroidSet::new(array![[0.0, 1.0, 2.0], [2.0, -1.0, 0.5], [1.0, 1.0, 1.0]]).unwrap();
        let bg = BackgroundSet::new(array![[0.1, 0.2, 0.3], [1.5, -0.5, 2.0]]).unwrap();
        let x = [0.7, 0.9, -1.0];
        let phi = exact_shapley(&cs, &x, &bg).unwrap();
        let fx = cs.probability(&x).unwrap();
        let base = super::super::marginalize(&cs, &x, &super::super::Coalition::empty(3), &bg).unwrap();
        for c in 0..3 {
            let total: f64 = phi.column(c).sum();
            assert!((total + base[c] - fx[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn too_many_features() {
        let m = EXACT_MAX_FEATURES + 1;
        let cs = CentroidSet::new(Array2::zeros((2, m))).unwrap();
        let bg = BackgroundSet::new(Array2::zeros((1, m))).unwrap();
        assert_eq!(
            exact_shapley(&cs, &vec![0.0; m], &bg).unwrap_err(),
            ModelError::TooManyFeatures { m, max: EXACT_MAX_FEATURES }
        );
    }
}
