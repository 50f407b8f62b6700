use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// LU factorization with partial pivoting, `P·M = L·U`, for small square matrices.
///
/// Supports solves with both `M` and `Mᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lu<T: Real> {
    /// Unit-lower `L` below the diagonal, `U` on and above it.
    factors: DMatrix<T>,
    /// Row `i` of `P·M` is row `perm[i]` of `M`.
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    /// Factors `m`. Fails with a singularity error if a pivot vanishes
    /// relative to `rel_tol · max|m|`.
    pub fn new(m: &DMatrix<T>, rel_tol: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dim(format!("LU of a {}x{} matrix", m.nrows(), m.ncols())));
        }
        let n = m.nrows();
        let mut a = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = m.amax();
        let floor = T::lit(rel_tol) * scale;
        for k in 0..n {
            let (mut piv, mut piv_abs) = (k, a[(k, k)].abs());
            for i in (k + 1)..n {
                if a[(i, k)].abs() > piv_abs {
                    piv = i;
                    piv_abs = a[(i, k)].abs();
                }
            }
            if piv_abs <= floor || piv_abs == T::zero() {
                return Err(Error::Singular(format!("zero pivot at column {k} of {n}")));
            }
            if piv != k {
                a.swap_rows(k, piv);
                perm.swap(k, piv);
            }
            let d = a[(k, k)];
            for i in (k + 1)..n {
                let f = a[(i, k)] / d;
                a[(i, k)] = f;
                if f != T::zero() {
                    for j in (k + 1)..n {
                        let u = a[(k, j)];
                        a[(i, j)] -= f * u;
                    }
                }
            }
        }
        Ok(Lu { factors: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Solves `M·X = rhs` for a block of right-hand sides.
    pub fn solve(&self, rhs: &DMatrix<T>) -> DMatrix<T> {
        let n = self.dim();
        assert_eq!(rhs.nrows(), n, "LU solve: rhs has wrong row count");
        let mut x = DMatrix::from_fn(n, rhs.ncols(), |i, j| rhs[(self.perm[i], j)]);
        for c in 0..x.ncols() {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.factors[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in (i + 1)..n {
                    s -= self.factors[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.factors[(i, i)];
            }
        }
        x
    }

    /// Solves `Mᵀ·X = rhs`.
    pub fn solve_transpose(&self, rhs: &DMatrix<T>) -> DMatrix<T> {
        let n = self.dim();
        assert_eq!(rhs.nrows(), n, "LU solve: rhs has wrong row count");
        // Mᵀ = Uᵀ Lᵀ P, so solve Uᵀ z = rhs, Lᵀ w = z, then x = Pᵀ w.
        let mut w = rhs.clone();
        for c in 0..w.ncols() {
            for i in 0..n {
                let mut s = w[(i, c)];
                for k in 0..i {
                    s -= self.factors[(k, i)] * w[(k, c)];
                }
                w[(i, c)] = s / self.factors[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = w[(i, c)];
                for k in (i + 1)..n {
                    s -= self.factors[(k, i)] * w[(k, c)];
                }
                w[(i, c)] = s;
            }
        }
        let mut x = DMatrix::zeros(n, rhs.ncols());
        for i in 0..n {
            x.set_row(self.perm[i], &w.row(i));
        }
        x
    }

    pub fn inverse(&self) -> DMatrix<T> {
        let n = self.dim();
        self.solve(&DMatrix::identity(n, n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_both_orientations() {
        let m = DMatrix::<f64>::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 4.0]);
        let lu = Lu::new(&m, 1e-14).unwrap();
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 3.0, -1.0]);
        assert!((&m * lu.solve(&b) - &b).norm() < 1e-13);
        assert!((m.transpose() * lu.solve_transpose(&b) - &b).norm() < 1e-13);
        assert!((&m * lu.inverse() - DMatrix::identity(3, 3)).norm() < 1e-13);
    }

    #[test]
    fn singular_matrix_rejected() {
        let m = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(Lu::new(&m, 1e-12), Err(Error::Singular(_))));
    }
}
