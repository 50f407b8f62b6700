//! Dense linear-algebra kernels: truncated SVD, pivoted QR, eigendecompositions,
//! Sylvester solves and the action of matrix exponentials.
//!
//! Matrices are `nalgebra::DMatrix` (column-major). Every routine is pure.

mod eig;
mod expm;
mod lu;
mod qr;
mod svd;
mod sylvester;

pub use eig::{general_eig, general_eig_with, sym_eig, sym_eig_with, Eigen};
pub use expm::{expm_apply, expm_pade, phi1, Side};
pub(crate) use expm::phi1_complex;
pub use lu::Lu;
pub use qr::{orthonormal_range, pivoted_qr, pivoted_qr_indices, pivoted_qr_indices_with, PivotedQr};
pub use svd::{singular_values, truncated_svd, truncated_svd_with, SvdTriplet};
pub(crate) use svd::thin_svd;
pub use sylvester::{solve_sylvester, solve_sylvester_with, SylvesterSolver};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Numerical thresholds used by the kernels.
///
/// Defaults sit roughly 100x above `f64` machine epsilon, scaled by problem norms.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    /// Relative asymmetry `‖S − Sᵀ‖_F / ‖S‖_F` below which a matrix counts as symmetric.
    pub symmetry: f64,
    /// Relative pivot size below which pivoted QR reports rank deficiency.
    pub rank: f64,
    /// Relative gap `min |λ_i(A) + λ_j(B)|` below which a Sylvester operator is singular.
    pub sylvester_gap: f64,
    /// Largest admissible condition number of a non-orthogonal eigenbasis.
    pub max_eig_condition: f64,
    /// Relative residual at which Lanczos Ritz triplets are accepted.
    pub lanczos: f64,
    /// Matrices whose smaller dimension is at most this use a dense SVD.
    pub dense_svd_limit: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            symmetry: 1e-10,
            rank: 1e-12,
            sylvester_gap: 1e-12,
            max_eig_condition: 1e12,
            lanczos: 1e-10,
            dense_svd_limit: 512,
        }
    }
}

pub(crate) fn ensure_finite<T: Real>(m: &DMatrix<T>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub(crate) fn ensure_square<T: Real>(m: &DMatrix<T>, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::dim(format!("{what} must be square, got {}x{}", m.nrows(), m.ncols())))
    }
}

/// Relative asymmetry `‖S − Sᵀ‖_F / ‖S‖_F` (zero for the zero matrix).
pub fn asymmetry<T: Real>(s: &DMatrix<T>) -> T {
    if !s.is_square() {
        return T::max_value().unwrap_or_else(T::one);
    }
    let norm = s.norm();
    if norm == T::zero() {
        return T::zero();
    }
    let mut acc = T::zero();
    for j in 0..s.ncols() {
        for i in 0..s.nrows() {
            let d = s[(i, j)] - s[(j, i)];
            acc += d * d;
        }
    }
    acc.sqrt() / norm
}

pub fn is_symmetric<T: Real>(s: &DMatrix<T>, rel_tol: f64) -> bool {
    s.is_square() && asymmetry(s) <= T::lit(rel_tol)
}

/// `‖QᵀQ − I‖_F`.
pub fn orthonormality_defect<T: Real>(q: &DMatrix<T>) -> T {
    let g = q.tr_mul(q);
    let k = g.nrows();
    (g - DMatrix::<T>::identity(k, k)).norm()
}

/// Gathers the listed rows of `m` into a new matrix.
pub fn select_rows<T: Real>(m: &DMatrix<T>, rows: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Gathers the listed columns of `m` into a new matrix.
pub fn select_columns<T: Real>(m: &DMatrix<T>, cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// Gathers the sub-block `m[rows, cols]`.
pub fn select_block<T: Real>(m: &DMatrix<T>, rows: &[usize], cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Flips column signs so that the largest-magnitude entry of each column of
/// `primary` is positive, mirroring the flips onto `partner`.
pub(crate) fn normalize_signs<T: Real>(primary: &mut DMatrix<T>, partner: Option<&mut DMatrix<T>>) {
    let mut flips = Vec::with_capacity(primary.ncols());
    for j in 0..primary.ncols() {
        let col = primary.column(j);
        let mut best = T::zero();
        let mut best_abs = T::zero();
        for &x in col.iter() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = x;
            }
        }
        flips.push(best < T::zero());
    }
    for (j, &flip) in flips.iter().enumerate() {
        if flip {
            primary.column_mut(j).neg_mut();
        }
    }
    if let Some(partner) = partner {
        for (j, &flip) in flips.iter().enumerate() {
            if flip && j < partner.ncols() {
                partner.column_mut(j).neg_mut();
            }
        }
    }
}

/// Spectral norm via a dense SVD. Intended for small matrices.
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    singular_values(m).first().copied().unwrap_or_else(T::zero)
}
