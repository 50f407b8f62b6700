use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex;

use super::{ensure_finite, ensure_square, Eigen, Lu};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Which side of `M` the exponential multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `e^{hA}·M`
    Left,
    /// `M·e^{hA}`
    Right,
}

/// `e^{hA}·M` or `M·e^{hA}` through a precomputed eigendecomposition of `A`.
///
/// For the general (complex) case the imaginary part of the result, which is
/// rounding noise for real data, is dropped.
pub fn expm_apply<T: Real>(eig: &Eigen<T>, h: T, m: &DMatrix<T>, side: Side) -> Result<DMatrix<T>> {
    let k = eig.dim();
    let conformal = match side {
        Side::Left => m.nrows() == k,
        Side::Right => m.ncols() == k,
    };
    if !conformal {
        return Err(Error::dim(format!(
            "exponential of a {k}x{k} matrix applied to a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    match eig {
        Eigen::Symmetric { vectors, values } => {
            let scale: Vec<T> = values.iter().map(|&l| (h * l).exp()).collect();
            Ok(match side {
                Side::Left => {
                    let mut c = vectors.tr_mul(m);
                    for (i, &s) in scale.iter().enumerate() {
                        c.row_mut(i).scale_mut(s);
                    }
                    vectors * c
                }
                Side::Right => {
                    let mut c = m * vectors;
                    for (j, &s) in scale.iter().enumerate() {
                        c.column_mut(j).scale_mut(s);
                    }
                    c * vectors.transpose()
                }
            })
        }
        Eigen::General { vectors, values, inverse } => {
            let scale: Vec<Complex<T>> = values.iter().map(|&l| ComplexField::exp(l * Complex::new(h, T::zero()))).collect();
            let mc = m.map(|x| Complex::new(x, T::zero()));
            let out = match side {
                Side::Left => {
                    let mut c = inverse * mc;
                    for (i, &s) in scale.iter().enumerate() {
                        let mut row = c.row_mut(i);
                        row *= s;
                    }
                    vectors * c
                }
                Side::Right => {
                    let mut c = mc * vectors;
                    for (j, &s) in scale.iter().enumerate() {
                        let mut col = c.column_mut(j);
                        col *= s;
                    }
                    c * inverse
                }
            };
            Ok(out.map(|z| z.re))
        }
    }
}

/// Dense matrix exponential by scaling and squaring with a diagonal Padé
/// approximant of degree 6.
pub fn expm_pade<T: Real>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    ensure_square(a, "expm_pade input")?;
    ensure_finite(a, "expm_pade")?;
    let n = a.nrows();
    let norm = a.iter().fold(T::zero(), |acc, &x| acc.max(x.abs())) * T::from_count(n.max(1));
    let mut squarings = 0u32;
    let mut scaled = a.clone();
    if norm > T::lit(0.5) {
        squarings = (norm / T::lit(0.5)).log2().ceil().to_u32().unwrap_or(0);
        scaled /= T::lit(2f64.powi(squarings as i32));
    }
    const Q: usize = 6;
    let id = DMatrix::<T>::identity(n, n);
    let mut c = T::one();
    let mut num = id.clone();
    let mut den = id.clone();
    let mut power = id;
    for k in 1..=Q {
        c = c * T::from_count(Q - k + 1) / T::from_count(k * (2 * Q - k + 1));
        power = &power * &scaled;
        num += &power * c;
        if k % 2 == 0 {
            den += &power * c;
        } else {
            den -= &power * c;
        }
    }
    let mut e = Lu::new(&den, 1e-14)?.solve(&num);
    for _ in 0..squarings {
        e = &e * &e;
    }
    Ok(e)
}

/// `φ₁(z) = (eᶻ − 1)/z`, continuous at `z = 0`.
pub fn phi1<T: Real>(z: T) -> T {
    if z.abs() < T::lit(1e-8) {
        T::one() + z * T::lit(0.5)
    } else {
        z.exp_m1() / z
    }
}

/// `φ₁` on the complex plane, accurate near the origin.
pub(crate) fn phi1_complex<T: Real>(z: Complex<T>) -> Complex<T> {
    let r = z.norm_sqr().sqrt();
    if r == T::zero() {
        return Complex::new(T::one(), T::zero());
    }
    if r < T::lit(1e-4) {
        // 1 + z/2 + z²/6 + z³/24
        let z2 = z * z;
        return Complex::new(T::one(), T::zero())
            + z * T::lit(0.5)
            + z2 / T::lit(6.0)
            + z2 * z / T::lit(24.0);
    }
    let (x, y) = (z.re, z.im);
    let half = y * T::lit(0.5);
    let s = half.sin();
    // e^{x+iy} − 1 without cancellation
    let em1 = Complex::new(x.exp_m1() * y.cos() - T::lit(2.0) * s * s, x.exp() * y.sin());
    em1 / z
}
