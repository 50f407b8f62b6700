use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ensure_finite, normalize_signs, Tolerances};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Leading singular triplets `M ≈ U·diag(S)·Vᵀ`.
///
/// `u` is `rows × r`, `v` is `cols × r`, both with orthonormal columns; `s` is
/// nonincreasing. Each column of `u` has its largest-magnitude entry positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTriplet<T: Real> {
    pub u: DMatrix<T>,
    pub s: Vec<T>,
    pub v: DMatrix<T>,
}

impl<T: Real> SvdTriplet<T> {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `U·diag(S)·Vᵀ`.
    pub fn recompose(&self) -> DMatrix<T> {
        let mut us = self.u.clone();
        for (j, &sj) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(sj);
        }
        us * self.v.transpose()
    }
}

/// The `r` leading singular triplets of `m`, with default tolerances.
pub fn truncated_svd<T: Real>(m: &DMatrix<T>, r: usize) -> Result<SvdTriplet<T>> {
    truncated_svd_with(m, r, &Tolerances::default())
}

/// The `r` leading singular triplets of `m`.
///
/// Matrices whose smaller dimension is within `tol.dense_svd_limit` go through
/// a dense SVD; larger ones through thick-restart Lanczos bidiagonalization.
pub fn truncated_svd_with<T: Real>(
    m: &DMatrix<T>,
    r: usize,
    tol: &Tolerances,
) -> Result<SvdTriplet<T>> {
    let kmax = m.nrows().min(m.ncols());
    if r == 0 || r > kmax {
        return Err(Error::dim(format!(
            "requested {r} singular triplets of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    ensure_finite(m, "truncated_svd")?;
    let mut out = if kmax <= tol.dense_svd_limit {
        dense_svd(m, r)
    } else {
        let work = (2 * r + 10).max(r + 20);
        if work >= kmax {
            dense_svd(m, r)
        } else {
            lanczos_svd(m, r, work, tol)?
        }
    };
    normalize_signs(&mut out.u, Some(&mut out.v));
    Ok(out)
}

fn dense_svd<T: Real>(m: &DMatrix<T>, r: usize) -> SvdTriplet<T> {
    let (u, s, v) = thin_svd(m);
    SvdTriplet { u: u.columns(0, r).into_owned(), s: s[..r].to_vec(), v: v.columns(0, r).into_owned() }
}

/// Thin SVD `M = U·diag(s)·Vᵀ`, `s` nonincreasing, `k = min(rows, cols)` columns.
///
/// nalgebra's bidiagonal QR iteration occasionally returns a wrong
/// factorization for rank-deficient input (e.g. some exactly rank-one
/// matrices) without reporting failure, so every result is checked; on a bad
/// residual the transpose is tried, then one-sided Jacobi.
pub(crate) fn thin_svd<T: Real>(m: &DMatrix<T>) -> (DMatrix<T>, Vec<T>, DMatrix<T>) {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return (DMatrix::zeros(rows, 0), Vec::new(), DMatrix::zeros(cols, 0));
    }
    if let Some(out) = nalgebra_svd(m).filter(|f| acceptable(m, f)) {
        return out;
    }
    let mt = m.transpose();
    if let Some((u, s, v)) = nalgebra_svd(&mt).filter(|f| acceptable(&mt, f)) {
        return (v, s, u);
    }
    jacobi_svd(m)
}

/// Singular values, nonincreasing.
pub fn singular_values<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    thin_svd(m).1
}

fn nalgebra_svd<T: Real>(m: &DMatrix<T>) -> Option<(DMatrix<T>, Vec<T>, DMatrix<T>)> {
    let svd = m.clone().try_svd(true, true, T::eps(), 0)?;
    let (u, vt) = (svd.u?, svd.v_t?);
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    Some((
        DMatrix::from_fn(m.nrows(), order.len(), |i, j| u[(i, order[j])]),
        order.iter().map(|&k| sv[k]).collect(),
        DMatrix::from_fn(m.ncols(), order.len(), |i, j| vt[(order[j], i)]),
    ))
}

fn acceptable<T: Real>(m: &DMatrix<T>, (u, s, v): &(DMatrix<T>, Vec<T>, DMatrix<T>)) -> bool {
    let k = s.len();
    let scale = T::lit((m.nrows().max(m.ncols()) as f64).sqrt()) * T::eps().sqrt();
    if s.iter().any(|x| !x.is_finite() || *x < T::zero()) {
        return false;
    }
    let mut us = u.clone();
    for (j, &sj) in s.iter().enumerate() {
        us.column_mut(j).scale_mut(sj);
    }
    let residual = (us * v.transpose() - m).norm();
    let eye = DMatrix::<T>::identity(k, k);
    residual <= scale * m.norm()
        && (u.tr_mul(u) - &eye).norm() <= scale
        && (v.tr_mul(v) - &eye).norm() <= scale
}

/// One-sided (Hestenes) Jacobi SVD: slow but dependable.
fn jacobi_svd<T: Real>(m: &DMatrix<T>) -> (DMatrix<T>, Vec<T>, DMatrix<T>) {
    if m.nrows() < m.ncols() {
        let (u, s, v) = jacobi_svd(&m.transpose());
        return (v, s, u);
    }
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut v = DMatrix::<T>::identity(cols, cols);
    let eps = T::eps();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let sn = c * t;
                for mat in [&mut a, &mut v] {
                    for i in 0..mat.nrows() {
                        let (x, y) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = c * x - sn * y;
                        mat[(i, q)] = sn * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<T> = (0..cols).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap_or(std::cmp::Ordering::Equal).then(x.cmp(&y)));
    let s: Vec<T> = order.iter().map(|&k| norms[k]).collect();
    let floor = s.first().copied().unwrap_or_else(T::zero) * eps * T::lit(rows as f64);
    let mut u = DMatrix::<T>::zeros(rows, cols);
    let mut filled = 0;
    for (j, &k) in order.iter().enumerate() {
        if norms[k] > floor && norms[k] > T::zero() {
            u.set_column(j, &(a.column(k) / norms[k]));
            filled = j + 1;
        }
    }
    // Null directions: complete to an orthonormal set with unit vectors.
    let mut e = 0;
    for j in filled..cols {
        loop {
            let mut w = DVector::<T>::zeros(rows);
            w[e % rows] = T::one();
            e += 1;
            for _ in 0..2 {
                for i in 0..j {
                    let d = u.column(i).dot(&w);
                    w.axpy(-d, &u.column(i), T::one());
                }
            }
            let nrm = w.norm();
            if nrm > T::lit(0.5) {
                u.set_column(j, &(w / nrm));
                break;
            }
        }
    }
    let v = DMatrix::from_fn(cols, cols, |i, j| v[(i, order[j])]);
    (u, s, v)
}

const MAX_RESTARTS: usize = 500;

/// Gram-Schmidt (two passes) of `w` against the first `k` columns of `basis`.
/// Returns the accumulated projection coefficients.
fn reorthogonalize<T: Real>(w: &mut DVector<T>, basis: &DMatrix<T>, k: usize) -> DVector<T> {
    let mut total = DVector::zeros(k);
    if k == 0 {
        return total;
    }
    let q = basis.columns(0, k);
    for _ in 0..2 {
        let c = q.tr_mul(w);
        *w -= q * &c;
        total += c;
    }
    total
}

fn random_unit_orthogonal<T: Real>(
    rng: &mut ChaCha8Rng,
    len: usize,
    basis: &DMatrix<T>,
    k: usize,
) -> DVector<T> {
    loop {
        let mut w = DVector::from_fn(len, |_, _| T::lit(rng.random::<f64>() - 0.5));
        reorthogonalize(&mut w, basis, k);
        let nrm = w.norm();
        if nrm > T::lit(1e-8) {
            return w / nrm;
        }
    }
}

/// Thick-restart Golub-Kahan-Lanczos bidiagonalization with full
/// reorthogonalization. `work` is the Krylov dimension per cycle.
fn lanczos_svd<T: Real>(
    a: &DMatrix<T>,
    r: usize,
    work: usize,
    tol: &Tolerances,
) -> Result<SvdTriplet<T>> {
    let (m, n) = a.shape();
    let anorm = a.norm();
    if anorm == T::zero() {
        let mut u = DMatrix::zeros(m, r);
        let mut v = DMatrix::zeros(n, r);
        for j in 0..r {
            u[(j, j)] = T::one();
            v[(j, j)] = T::one();
        }
        return Ok(SvdTriplet { u, s: vec![T::zero(); r], v });
    }
    let breakdown = T::eps() * T::lit(100.0) * anorm;
    let l = work;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a2c);
    let mut vb = DMatrix::<T>::zeros(n, l + 1);
    let mut ub = DMatrix::<T>::zeros(m, l);
    let mut bmat = DMatrix::<T>::zeros(l, l);
    let mut beta_last = T::zero();

    let v0 = random_unit_orthogonal(&mut rng, n, &vb, 0);
    vb.set_column(0, &v0);
    let mut start = 0;

    for _cycle in 0..MAX_RESTARTS {
        for j in start..l {
            let mut w = a * vb.column(j);
            let coeffs = reorthogonalize(&mut w, &ub, j);
            for i in 0..j {
                bmat[(i, j)] = coeffs[i];
            }
            let alpha = w.norm();
            if alpha <= breakdown {
                w = random_unit_orthogonal(&mut rng, m, &ub, j);
                bmat[(j, j)] = T::zero();
            } else {
                w /= alpha;
                bmat[(j, j)] = alpha;
            }
            ub.set_column(j, &w);

            let mut z = a.tr_mul(&ub.column(j));
            reorthogonalize(&mut z, &vb, j + 1);
            let beta = z.norm();
            if beta <= breakdown {
                z = random_unit_orthogonal(&mut rng, n, &vb, j + 1);
                beta_last = T::zero();
            } else {
                z /= beta;
                beta_last = beta;
            }
            vb.set_column(j + 1, &z);
        }

        let small = dense_svd(&bmat, l);
        let sigma1 = small.s[0];
        let converged = (0..r).all(|i| {
            beta_last * small.u[(l - 1, i)].abs() <= T::lit(tol.lanczos) * sigma1
        }) || sigma1 == T::zero();

        let keep = if converged { r } else { (r + (l - r) / 2).min(l - 1) };
        let u_ritz = &ub * small.u.columns(0, keep);
        let v_ritz = vb.columns(0, l) * small.v.columns(0, keep);

        if converged {
            return Ok(SvdTriplet {
                u: u_ritz,
                s: small.s[..r].to_vec(),
                v: v_ritz,
            });
        }

        let next = vb.column(l).clone_owned();
        ub.columns_mut(0, keep).copy_from(&u_ritz);
        vb.columns_mut(0, keep).copy_from(&v_ritz);
        vb.set_column(keep, &next);
        bmat.fill(T::zero());
        for i in 0..keep {
            bmat[(i, i)] = small.s[i];
        }
        start = keep;
    }
    Err(Error::NoConvergence(format!(
        "Lanczos bidiagonalization for {r} triplets of a {m}x{n} matrix"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_defect;

    fn seeded(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn rank_one_inputs_factor_correctly() {
        // nalgebra alone gets this one wrong
        let n = 33;
        let m = DMatrix::<f64>::from_fn(n, n, |i, j| ((i * 7 + 3) as f64).sin() * ((j * 5 + 1) as f64).cos());
        let t = truncated_svd(&m, 3).unwrap();
        assert!((t.recompose() - &m).norm() < 1e-12 * m.norm());
        assert!(t.s[1] < 1e-12 * t.s[0]);
    }

    #[test]
    fn jacobi_matches_reference() {
        let m = seeded(9, 6, 4);
        let (u, s, v) = jacobi_svd(&m);
        assert!(acceptable(&m, &(u, s.clone(), v)));
        let (u, s2, v) = jacobi_svd(&m.transpose());
        assert!(acceptable(&m.transpose(), &(u, s2.clone(), v)));
        for (a, b) in s.iter().zip(&s2) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut z = DMatrix::<f64>::zeros(5, 4);
        z[(1, 2)] = 3.0;
        let (u, s, v) = jacobi_svd(&z);
        assert_eq!(s[0], 3.0);
        assert!(acceptable(&z, &(u, s, v)));
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let t = truncated_svd(&DMatrix::<f64>::identity(3, 3), 2).unwrap();
        assert_eq!(t.s.len(), 2);
        assert!((t.s[0] - 1.0).abs() < 1e-14 && (t.s[1] - 1.0).abs() < 1e-14);
        assert!(orthonormality_defect(&t.u) < 1e-14);
    }

    #[test]
    fn diagonal_truncation_leaves_third_value() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0f64, 2.0, 1.0]));
        let t = truncated_svd(&m, 2).unwrap();
        assert!((t.s[0] - 3.0).abs() < 1e-14 && (t.s[1] - 2.0).abs() < 1e-14);
        let resid = crate::linalg::spectral_norm(&(m - t.recompose()));
        assert!((resid - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_out_of_range_is_dimension_error() {
        let m = DMatrix::<f64>::identity(3, 4);
        assert!(matches!(truncated_svd(&m, 0), Err(Error::Dimension(_))));
        assert!(matches!(truncated_svd(&m, 4), Err(Error::Dimension(_))));
    }

    #[test]
    fn non_finite_input_rejected() {
        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(1, 2)] = f64::NAN;
        assert!(matches!(truncated_svd(&m, 1), Err(Error::NonFinite(_))));
    }

    #[test]
    fn lanczos_matches_dense_on_random_matrix() {
        let m = seeded(140, 120, 7);
        let tol = Tolerances { dense_svd_limit: 10, ..Tolerances::default() };
        let lz = truncated_svd_with(&m, 6, &tol).unwrap();
        let dn = truncated_svd(&m, 6).unwrap();
        for (a, b) in lz.s.iter().zip(&dn.s) {
            assert!((a - b).abs() <= 1e-10 * dn.s[0], "{a} vs {b}");
        }
        assert!(orthonormality_defect(&lz.u) < 1e-10);
        assert!(orthonormality_defect(&lz.v) < 1e-10);
        // Subspaces agree column-wise (signs are normalized identically).
        assert!((&lz.u - &dn.u).norm() < 1e-7);
    }

    #[test]
    fn lanczos_handles_rank_one_input() {
        let x = DVector::from_fn(200, |i, _| ((i as f64) * 0.1).sin());
        let y = DVector::from_fn(180, |i, _| ((i as f64) * 0.05).cos());
        let m = &x * y.transpose();
        let tol = Tolerances { dense_svd_limit: 10, ..Tolerances::default() };
        let t = truncated_svd_with(&m, 5, &tol).unwrap();
        assert!((t.s[0] - x.norm() * y.norm()).abs() < 1e-10 * t.s[0]);
        assert!(t.s[1] < 1e-10 * t.s[0]);
        assert!(orthonormality_defect(&t.u) < 1e-10);
    }
}
