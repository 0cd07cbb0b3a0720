//! Small dense linear algebra kernels: symmetric eigendecomposition and
//! Cholesky solves. Matrices here are at most a few hundred rows wide.

use ndarray::{Array1, Array2};

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
/// Column `k` of `vectors` is the eigenvector for `values[k]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

/// Cyclic Jacobi rotations. Converges quadratically; fine for m <= 64.
pub fn jacobi_eigen(a: &Array2<f64>) -> SymmetricEigen {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut a = a.clone();
    let mut v = Array2::<f64>::eye(n);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[[p, q]] * a[[p, q]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    SymmetricEigen { values, vectors }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    /// Returns `None` when a pivot falls below `rel_tol` times the largest
    /// diagonal entry, i.e. the matrix is numerically singular.
    pub fn factor(a: &Array2<f64>, rel_tol: f64) -> Option<Self> {
        let n = a.nrows();
        let max_diag = (0..n).map(|i| a[[i, i]].abs()).fold(0.0, f64::max);
        if n > 0 && max_diag <= 0.0 {
            return None;
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if !(d > rel_tol * max_diag) {
                return None;
            }
            let d = d.sqrt();
            l[[j, j]] = d;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / d;
            }
        }
        Some(Self { l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.nrows();
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[[i, k]] * y[k];
            }
            y[i] = s / self.l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[[k, i]] * y[k];
            }
            y[i] = s / self.l[[i, i]];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigen_of_diagonal_is_sorted() {
        let e = jacobi_eigen(&array![[1.0, 0.0], [0.0, 3.0]]);
        assert_eq!(e.values.to_vec(), vec![3.0, 1.0]);
        assert!((e.vectors[[1, 0]].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let a = array![[4.0, 1.0, -2.0], [1.0, 2.0, 0.5], [-2.0, 0.5, 3.0]];
        let e = jacobi_eigen(&a);
        let recon = e.vectors.dot(&Array2::from_diag(&e.values)).dot(&e.vectors.t());
        for (x, y) in recon.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_solves_and_detects_singularity() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let x = Cholesky::factor(&a, 1e-12).unwrap().solve(&[2.0, 1.0]);
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-14);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-14);
        assert!(Cholesky::factor(&array![[1.0, 1.0], [1.0, 1.0]], 1e-12).is_none());
    }
}
