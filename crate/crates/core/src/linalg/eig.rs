use nalgebra::{DMatrix, Schur, SymmetricEigen};
use num_complex::Complex;

use super::{ensure_finite, ensure_square, is_symmetric, normalize_signs, Tolerances};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigendecomposition `S = X·diag(λ)·X⁻¹`.
#[derive(Debug, Clone)]
pub enum Eigen<T: Real> {
    /// Orthogonal eigenbasis, real eigenvalues in ascending order (`X⁻¹ = Xᵀ`).
    Symmetric { vectors: DMatrix<T>, values: Vec<T> },
    /// Complex eigenbasis with its explicitly formed inverse.
    General {
        vectors: DMatrix<Complex<T>>,
        values: Vec<Complex<T>>,
        inverse: DMatrix<Complex<T>>,
    },
}

impl<T: Real> Eigen<T> {
    pub fn dim(&self) -> usize {
        match self {
            Eigen::Symmetric { values, .. } => values.len(),
            Eigen::General { values, .. } => values.len(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(self, Eigen::Symmetric { .. })
    }

    /// Eigenvalues as complex numbers, in decomposition order.
    pub fn values_complex(&self) -> Vec<Complex<T>> {
        match self {
            Eigen::Symmetric { values, .. } => {
                values.iter().map(|&v| Complex::new(v, T::zero())).collect()
            }
            Eigen::General { values, .. } => values.clone(),
        }
    }

    /// Reassembles `X·diag(λ)·X⁻¹` (real part for the general case).
    pub fn recompose(&self) -> DMatrix<T> {
        match self {
            Eigen::Symmetric { vectors, values } => {
                let mut scaled = vectors.clone();
                for (j, &lam) in values.iter().enumerate() {
                    scaled.column_mut(j).scale_mut(lam);
                }
                scaled * vectors.transpose()
            }
            Eigen::General { vectors, values, inverse } => {
                let mut scaled = vectors.clone();
                for (j, &lam) in values.iter().enumerate() {
                    let mut col = scaled.column_mut(j);
                    col *= lam;
                }
                (scaled * inverse).map(|z| z.re)
            }
        }
    }
}

/// Symmetric eigendecomposition with ascending eigenvalues.
pub fn sym_eig<T: Real>(s: &DMatrix<T>) -> Result<Eigen<T>> {
    sym_eig_with(s, &Tolerances::default())
}

pub fn sym_eig_with<T: Real>(s: &DMatrix<T>, tol: &Tolerances) -> Result<Eigen<T>> {
    ensure_square(s, "sym_eig input")?;
    ensure_finite(s, "sym_eig")?;
    if !is_symmetric(s, tol.symmetry) {
        return Err(Error::Structure(format!(
            "matrix is not symmetric (relative asymmetry {:e})",
            super::asymmetry(s)
        )));
    }
    let n = s.nrows();
    let sym = (s + s.transpose()) * T::lit(0.5);
    let dec = SymmetricEigen::try_new(sym, T::default_epsilon(), 10_000 * n.max(1))
        .ok_or_else(|| Error::NoConvergence("symmetric eigendecomposition".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        dec.eigenvalues[a]
            .partial_cmp(&dec.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut vectors = DMatrix::from_fn(n, n, |i, j| dec.eigenvectors[(i, order[j])]);
    normalize_signs(&mut vectors, None);
    let values = order.iter().map(|&k| dec.eigenvalues[k]).collect();
    Ok(Eigen::Symmetric { vectors, values })
}

/// Real Schur form `S = Q·T·Qᵀ`, `T` quasi upper triangular with exact zeros
/// below the 1×1 / 2×2 diagonal blocks.
pub(crate) fn real_schur<T: Real>(s: &DMatrix<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let n = s.nrows();
    if n == 1 {
        return Ok((DMatrix::identity(1, 1), s.clone()));
    }
    let dec = Schur::try_new(s.clone(), T::default_epsilon(), 10_000 * n.max(1))
        .ok_or_else(|| Error::NoConvergence("real Schur decomposition".into()))?;
    let (q, mut t) = dec.unpack();
    for j in 0..n {
        for i in (j + 2)..n {
            t[(i, j)] = T::zero();
        }
    }
    for i in 0..n.saturating_sub(1) {
        let scale = t[(i, i)].abs() + t[(i + 1, i + 1)].abs();
        if t[(i + 1, i)].abs() <= T::eps() * scale {
            t[(i + 1, i)] = T::zero();
        }
    }
    // Two consecutive nonzero subdiagonals cannot both start a block; keep the first.
    let mut i = 0;
    while i + 1 < n {
        if t[(i + 1, i)] != T::zero() {
            if i + 2 < n {
                t[(i + 2, i + 1)] = T::zero();
            }
            i += 2;
        } else {
            i += 1;
        }
    }
    Ok((q, t))
}

/// Diagonal blocks `(start, size)` of a quasi-triangular Schur factor.
pub(crate) fn schur_blocks<T: Real>(t: &DMatrix<T>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != T::zero() {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Eigenvalues of a 2×2 real block `[[a, b], [c, d]]`.
pub(crate) fn block_eigenvalues<T: Real>(a: T, b: T, c: T, d: T) -> [Complex<T>; 2] {
    let half = T::lit(0.5);
    let mean = (a + d) * half;
    let diff = (a - d) * half;
    let disc = diff * diff + b * c;
    if disc >= T::zero() {
        let r = disc.sqrt();
        [Complex::new(mean + r, T::zero()), Complex::new(mean - r, T::zero())]
    } else {
        let r = (-disc).sqrt();
        [Complex::new(mean, r), Complex::new(mean, -r)]
    }
}

/// Eigenvalues of a quasi-triangular Schur factor, in block order.
pub(crate) fn schur_eigenvalues<T: Real>(t: &DMatrix<T>) -> Vec<Complex<T>> {
    let mut out = Vec::with_capacity(t.nrows());
    for (i, size) in schur_blocks(t) {
        if size == 1 {
            out.push(Complex::new(t[(i, i)], T::zero()));
        } else {
            let ev = block_eigenvalues(t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            out.extend_from_slice(&ev);
        }
    }
    out
}

/// Eigendecomposition of a general (diagonalizable) real matrix.
///
/// Goes through the real Schur form, unitarily triangularizes its 2×2 blocks,
/// back-substitutes the triangular eigenvectors and inverts the eigenbasis.
/// Fails with a conditioning error when `κ₂(X)` exceeds the tolerance.
pub fn general_eig<T: Real>(s: &DMatrix<T>) -> Result<Eigen<T>> {
    general_eig_with(s, &Tolerances::default())
}

pub fn general_eig_with<T: Real>(s: &DMatrix<T>, tol: &Tolerances) -> Result<Eigen<T>> {
    ensure_square(s, "general_eig input")?;
    ensure_finite(s, "general_eig")?;
    let n = s.nrows();
    let (q, t) = real_schur(s)?;
    let c = |x: T| Complex::new(x, T::zero());
    let mut tc: DMatrix<Complex<T>> = t.map(c);
    let mut qc: DMatrix<Complex<T>> = q.map(c);

    for (i, size) in schur_blocks(&t) {
        if size != 2 {
            continue;
        }
        let (a, b, cc, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
        let lam = block_eigenvalues(a, b, cc, d)[0];
        // Eigenvector of the block for `lam`: pick the better conditioned of two forms.
        let x1 = [c(b), lam - c(a)];
        let x2 = [lam - c(d), c(cc)];
        let n1 = x1[0].norm_sqr() + x1[1].norm_sqr();
        let n2 = x2[0].norm_sqr() + x2[1].norm_sqr();
        let x = if n1 >= n2 { x1 } else { x2 };
        let nx = (x[0].norm_sqr() + x[1].norm_sqr()).sqrt();
        let (g0, g1) = (x[0] / c(nx), x[1] / c(nx));
        // G = [[g0, -conj(g1)], [g1, conj(g0)]]
        let g = [[g0, -g1.conj()], [g1, g0.conj()]];
        // Tc <- Gᴴ Tc on rows i, i+1
        for j in 0..n {
            let (r0, r1) = (tc[(i, j)], tc[(i + 1, j)]);
            tc[(i, j)] = g[0][0].conj() * r0 + g[1][0].conj() * r1;
            tc[(i + 1, j)] = g[0][1].conj() * r0 + g[1][1].conj() * r1;
        }
        // Tc <- Tc G and Qc <- Qc G on columns i, i+1
        for m in [&mut tc, &mut qc] {
            for r in 0..n {
                let (c0, c1) = (m[(r, i)], m[(r, i + 1)]);
                m[(r, i)] = c0 * g[0][0] + c1 * g[1][0];
                m[(r, i + 1)] = c0 * g[0][1] + c1 * g[1][1];
            }
        }
        tc[(i + 1, i)] = Complex::new(T::zero(), T::zero());
    }

    let values: Vec<Complex<T>> = (0..n).map(|k| tc[(k, k)]).collect();
    let tnorm = tc.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt();
    let small = T::eps() * tnorm.max(T::min_value().unwrap_or_else(T::eps));
    let mut xt = DMatrix::<Complex<T>>::zeros(n, n);
    for k in 0..n {
        xt[(k, k)] = c(T::one());
        for i in (0..k).rev() {
            let mut acc = c(T::zero());
            for j in (i + 1)..=k {
                acc += tc[(i, j)] * xt[(j, k)];
            }
            let mut den = tc[(i, i)] - values[k];
            if den.norm_sqr().sqrt() < small {
                den = c(small);
            }
            xt[(i, k)] = -acc / den;
        }
    }
    let mut vectors = qc * xt;
    for j in 0..n {
        let nrm = vectors.column(j).iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt();
        if nrm > T::zero() {
            let mut col = vectors.column_mut(j);
            col *= Complex::new(T::one() / nrm, T::zero());
        }
    }
    let inverse = vectors
        .clone()
        .try_inverse()
        .ok_or(Error::Conditioning(f64::INFINITY))?;
    let cond = complex_spectral_norm(&vectors) * complex_spectral_norm(&inverse);
    if !cond.is_finite() || cond.as_f64() > tol.max_eig_condition {
        return Err(Error::Conditioning(cond.as_f64()));
    }
    Ok(Eigen::General { vectors, values, inverse })
}

fn complex_spectral_norm<T: Real>(m: &DMatrix<Complex<T>>) -> T {
    // Real embedding [[Re, −Im], [Im, Re]] has the same singular values, doubled.
    let (r, c) = m.shape();
    let emb = DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = m[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    super::spectral_norm(&emb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_defect;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_sorted_ascending() {
        let s = DMatrix::<f64>::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -1.0]);
        let Eigen::Symmetric { vectors, values } = sym_eig(&s).unwrap() else { panic!() };
        assert_eq!(values, vec![-1.0, 2.0]);
        assert!((vectors.abs() - DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn swap_matrix() {
        let s = DMatrix::<f64>::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let Eigen::Symmetric { vectors, values } = sym_eig(&s).unwrap() else { panic!() };
        assert!((values[0] + 1.0).abs() < 1e-15 && (values[1] - 1.0).abs() < 1e-15);
        let h = 0.5f64.sqrt();
        assert!((vectors[(0, 0)].abs() - h).abs() < 1e-15);
        assert!((vectors[(0, 0)] + vectors[(1, 0)]).abs() < 1e-15);
        assert!((vectors[(0, 1)] - vectors[(1, 1)]).abs() < 1e-15);
    }

    #[test]
    fn random_symmetric_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = DMatrix::<f64>::from_fn(12, 12, |_, _| rng.random::<f64>() - 0.5);
        let s = &a + a.transpose();
        let Eigen::Symmetric { vectors, values } = sym_eig(&s).unwrap() else { panic!() };
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(values.clone()));
        assert!((&s * &vectors - &vectors * d).norm() <= 1e-9 * s.norm());
        assert!(orthonormality_defect(&vectors) < 1e-10);
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn asymmetric_input_is_structure_error() {
        let s = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 2.0]);
        assert!(matches!(sym_eig(&s), Err(Error::Structure(_))));
    }

    fn sorted_by_re_im(mut v: Vec<Complex<f64>>) -> Vec<Complex<f64>> {
        v.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
        v
    }

    #[test]
    fn triangular_spectrum() {
        let s = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 2.0]);
        let e = general_eig(&s).unwrap();
        let v = sorted_by_re_im(e.values_complex());
        assert!((v[0] - Complex::new(1.0, 0.0)).norm() < 1e-14);
        assert!((v[1] - Complex::new(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn rotation_has_conjugate_pair() {
        let s = DMatrix::<f64>::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let e = general_eig(&s).unwrap();
        let v = sorted_by_re_im(e.values_complex());
        assert!((v[0] - Complex::new(0.0, -1.0)).norm() < 1e-14);
        assert!((v[1] - Complex::new(0.0, 1.0)).norm() < 1e-14);
        assert!((e.recompose() - s).norm() < 1e-13);
    }

    #[test]
    fn random_general_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let s = DMatrix::<f64>::from_fn(10, 10, |_, _| rng.random::<f64>() - 0.5);
        let Eigen::General { vectors, values, inverse } = general_eig(&s).unwrap() else {
            panic!()
        };
        let sc = s.map(|x| Complex::new(x, 0.0));
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(values));
        let resid = (&sc * &vectors - &vectors * d).norm();
        assert!(resid <= 1e-8 * s.norm(), "residual {resid}");
        let id = DMatrix::<Complex<f64>>::identity(10, 10);
        assert!((&inverse * &vectors - id).norm() <= 1e-8);
    }

    #[test]
    fn defective_matrix_is_conditioning_error() {
        let s = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(general_eig(&s), Err(Error::Conditioning(_))));
    }
}
