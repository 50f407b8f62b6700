use nalgebra::{DMatrix, DVector};

use super::{ensure_finite, Tolerances};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Partial Householder QR with column pivoting, `M·Π = Q·R`.
#[derive(Debug, Clone)]
pub struct PivotedQr<T: Real> {
    /// `rows × steps`, orthonormal columns.
    pub q: DMatrix<T>,
    /// `steps × cols`, upper trapezoidal in pivot order.
    pub r: DMatrix<T>,
    /// Column permutation: `perm[k]` is the original index of pivot column `k`.
    pub perm: Vec<usize>,
    /// Absolute value of each pivot, in pivot order.
    pub pivots: Vec<T>,
}

struct Reflector<T: Real> {
    v: DVector<T>,
    beta: T,
}

/// Runs `steps` steps of Householder QR with column pivoting.
///
/// Pivot columns maximize the remaining column norm; among exactly equal
/// norms the lowest original column index wins. Column norms are recomputed
/// at every step rather than downdated, so ties stay exact.
pub fn pivoted_qr<T: Real>(m: &DMatrix<T>, steps: usize) -> PivotedQr<T> {
    let (rows, cols) = m.shape();
    let steps = steps.min(rows).min(cols);
    let mut work = m.clone();
    let mut perm: Vec<usize> = (0..cols).collect();
    let mut pivots = Vec::with_capacity(steps);
    let mut reflectors = Vec::with_capacity(steps);

    for k in 0..steps {
        let mut best = k;
        let mut best_norm = T::zero();
        for j in k..cols {
            let nrm = work.view((k, j), (rows - k, 1)).norm_squared();
            if nrm > best_norm || (nrm == best_norm && perm[j] < perm[best]) {
                best = j;
                best_norm = nrm;
            }
        }
        if best != k {
            work.swap_columns(k, best);
            perm.swap(k, best);
        }
        let x = work.view((k, k), (rows - k, 1)).column(0).clone_owned();
        let xnorm = x.norm();
        pivots.push(xnorm);
        if xnorm == T::zero() {
            reflectors.push(Reflector { v: DVector::zeros(rows - k), beta: T::zero() });
            continue;
        }
        let alpha = if x[0] >= T::zero() { -xnorm } else { xnorm };
        let mut v = x;
        v[0] -= alpha;
        let vnorm2 = v.norm_squared();
        let beta = if vnorm2 == T::zero() { T::zero() } else { T::lit(2.0) / vnorm2 };
        if beta != T::zero() {
            let mut block = work.view_mut((k, k), (rows - k, cols - k));
            let proj = block.tr_mul(&v) * beta;
            block.ger(-T::one(), &v, &proj, T::one());
        }
        work[(k, k)] = alpha;
        for i in (k + 1)..rows {
            work[(i, k)] = T::zero();
        }
        reflectors.push(Reflector { v, beta });
    }

    let mut q = DMatrix::<T>::zeros(rows, steps);
    for j in 0..steps {
        q[(j, j)] = T::one();
    }
    for (k, h) in reflectors.iter().enumerate().rev() {
        if h.beta == T::zero() {
            continue;
        }
        let mut block = q.view_mut((k, 0), (rows - k, steps));
        let proj = block.tr_mul(&h.v) * h.beta;
        block.ger(-T::one(), &h.v, &proj, T::one());
    }
    let r = work.rows(0, steps).into_owned();
    PivotedQr { q, r, perm, pivots }
}

/// Interpolation indices for the rows-by-columns matrix `bt` (`p × n`, `n ≥ p`):
/// the first `p` column pivots of a pivoted QR, in pivot order (0-based).
pub fn pivoted_qr_indices<T: Real>(bt: &DMatrix<T>) -> Result<Vec<usize>> {
    pivoted_qr_indices_with(bt, &Tolerances::default())
}

pub fn pivoted_qr_indices_with<T: Real>(bt: &DMatrix<T>, tol: &Tolerances) -> Result<Vec<usize>> {
    let (p, n) = bt.shape();
    if p == 0 || n < p {
        return Err(Error::dim(format!("pivoted QR selection needs p <= n, got {p}x{n}")));
    }
    ensure_finite(bt, "pivoted_qr_indices")?;
    let qr = pivoted_qr(bt, p);
    let floor = T::lit(tol.rank) * bt.norm();
    if let Some(k) = qr.pivots.iter().position(|&piv| piv < floor || piv == T::zero()) {
        return Err(Error::Rank(format!(
            "pivot {k} of {p} has magnitude {:e} below {:e}",
            qr.pivots[k], floor
        )));
    }
    Ok(qr.perm[..p].to_vec())
}

/// Orthonormal basis of `Range(m)` from a pivoted QR, truncated at the first
/// pivot below `rtol` times the leading pivot. Returns an empty `rows × 0`
/// matrix for the zero matrix.
pub fn orthonormal_range<T: Real>(m: &DMatrix<T>, rtol: f64) -> DMatrix<T> {
    let steps = m.nrows().min(m.ncols());
    if steps == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let qr = pivoted_qr(m, steps);
    let lead = qr.pivots[0];
    if lead == T::zero() {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let rank = qr
        .pivots
        .iter()
        .take_while(|&&piv| piv > T::lit(rtol) * lead)
        .count();
    qr.q.columns(0, rank).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_defect;

    #[test]
    fn unit_rows_select_their_columns() {
        // rows e_2ᵀ and e_5ᵀ of I_6 (1-based) -> columns 1 and 4 (0-based)
        let mut bt = DMatrix::<f64>::zeros(2, 6);
        bt[(0, 1)] = 1.0;
        bt[(1, 4)] = 1.0;
        assert_eq!(pivoted_qr_indices(&bt).unwrap(), vec![1, 4]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let bt = DMatrix::<f64>::from_element(1, 7, 1.0);
        assert_eq!(pivoted_qr_indices(&bt).unwrap(), vec![0]);
    }

    #[test]
    fn rank_deficiency_detected() {
        let bt = DMatrix::<f64>::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(pivoted_qr_indices(&bt), Err(Error::Rank(_))));
    }

    #[test]
    fn wide_input_required() {
        let bt = DMatrix::<f64>::identity(3, 2);
        assert!(matches!(pivoted_qr_indices(&bt), Err(Error::Dimension(_))));
    }

    #[test]
    fn factorization_reproduces_permuted_matrix() {
        let m = DMatrix::<f64>::from_fn(5, 7, |i, j| ((i * 7 + j) as f64 * 0.37).sin());
        let f = pivoted_qr(&m, 5);
        let permuted = DMatrix::from_fn(5, 7, |i, j| m[(i, f.perm[j])]);
        assert!((&f.q * &f.r - permuted).norm() < 1e-13);
        assert!(orthonormality_defect(&f.q) < 1e-14);
    }

    #[test]
    fn range_basis_drops_dependent_columns() {
        let a = DVector::from_fn(6, |i, _| i as f64 + 1.0);
        let b = DVector::from_fn(6, |i, _| (i as f64).cos());
        let m = DMatrix::from_columns(&[a.clone(), b.clone(), a * 2.0]);
        let q = orthonormal_range(&m, 1e-12);
        assert_eq!(q.ncols(), 2);
        assert!(orthonormality_defect(&q) < 1e-14);
    }
}
