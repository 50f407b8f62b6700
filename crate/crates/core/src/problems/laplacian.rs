use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Boundary closure of a 1D finite-difference operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Homogeneous Dirichlet; interior nodes only, `h = (b−a)/(n+1)`.
    Dirichlet,
    /// Homogeneous Neumann with mirrored ghost points; boundary nodes included, `h = (b−a)/(n−1)`.
    Neumann,
    /// Periodic wrap; left endpoint included, `h = (b−a)/n`.
    Periodic,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Dirichlet => "dirichlet0",
            Boundary::Neumann => "neumann0",
            Boundary::Periodic => "periodic",
        })
    }
}

impl FromStr for Boundary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dirichlet" | "dirichlet0" => Ok(Boundary::Dirichlet),
            "neumann" | "neumann0" => Ok(Boundary::Neumann),
            "periodic" => Ok(Boundary::Periodic),
            other => Err(Error::Config(format!("unknown boundary condition '{other}'"))),
        }
    }
}

fn check(n: usize, a: f64, b: f64) -> Result<()> {
    if n < 3 {
        return Err(Error::dim(format!("finite-difference operator needs n >= 3, got {n}")));
    }
    if !(b > a) {
        return Err(Error::Domain(format!("empty interval [{a}, {b}]")));
    }
    Ok(())
}

/// Grid spacing for `n` nodes on `[a, b]` under the given closure.
pub fn spacing(n: usize, bc: Boundary, a: f64, b: f64) -> f64 {
    let len = b - a;
    match bc {
        Boundary::Dirichlet => len / (n as f64 + 1.0),
        Boundary::Neumann => len / (n as f64 - 1.0),
        Boundary::Periodic => len / n as f64,
    }
}

/// Node coordinates matching [`build_laplacian_1d`].
pub fn grid_nodes<T: Real>(n: usize, bc: Boundary, a: f64, b: f64) -> Vec<T> {
    let h = spacing(n, bc, a, b);
    let offset = if bc == Boundary::Dirichlet { 1.0 } else { 0.0 };
    (0..n).map(|i| T::lit(a + (i as f64 + offset) * h)).collect()
}

/// `coeff · D₂`, the three-point second-difference matrix.
pub fn build_laplacian_1d<T: Real>(n: usize, bc: Boundary, a: f64, b: f64, coeff: f64) -> Result<DMatrix<T>> {
    check(n, a, b)?;
    if !(coeff > 0.0) {
        return Err(Error::Domain(format!("diffusion coefficient must be positive, got {coeff}")));
    }
    let h = spacing(n, bc, a, b);
    let s = coeff / (h * h);
    let mut d = DMatrix::<T>::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = T::lit(-2.0 * s);
        if i > 0 {
            d[(i, i - 1)] = T::lit(s);
        }
        if i + 1 < n {
            d[(i, i + 1)] = T::lit(s);
        }
    }
    match bc {
        Boundary::Dirichlet => {}
        Boundary::Neumann => {
            d[(0, 1)] = T::lit(2.0 * s);
            d[(n - 1, n - 2)] = T::lit(2.0 * s);
        }
        Boundary::Periodic => {
            d[(0, n - 1)] = T::lit(s);
            d[(n - 1, 0)] = T::lit(s);
        }
    }
    Ok(d)
}

/// `coeff · D₁`, the centered first-difference matrix with the same closure.
/// Under Neumann the mirrored ghost point makes the boundary rows vanish.
pub fn first_derivative_1d<T: Real>(n: usize, bc: Boundary, a: f64, b: f64, coeff: f64) -> Result<DMatrix<T>> {
    check(n, a, b)?;
    let h = spacing(n, bc, a, b);
    let s = coeff / (2.0 * h);
    let mut d = DMatrix::<T>::zeros(n, n);
    for i in 0..n {
        if i > 0 {
            d[(i, i - 1)] = T::lit(-s);
        }
        if i + 1 < n {
            d[(i, i + 1)] = T::lit(s);
        }
    }
    match bc {
        Boundary::Dirichlet => {}
        Boundary::Neumann => {
            d[(0, 1)] = T::zero();
            d[(n - 1, n - 2)] = T::zero();
        }
        Boundary::Periodic => {
            d[(0, n - 1)] = T::lit(-s);
            d[(n - 1, 0)] = T::lit(s);
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirichlet_textbook_stencil() {
        let d = build_laplacian_1d::<f64>(3, Boundary::Dirichlet, 0.0, 4.0, 1.0).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 0.0, 1.0, -2.0, 1.0, 0.0, 1.0, -2.0]);
        assert_eq!(d, want);
        assert_eq!(grid_nodes::<f64>(3, Boundary::Dirichlet, 0.0, 4.0), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn periodic_circulant() {
        let d = build_laplacian_1d::<f64>(4, Boundary::Periodic, 0.0, 4.0, 1.0).unwrap();
        for i in 0..4 {
            let row: Vec<f64> = (0..4).map(|k| d[(i, (i + k) % 4)]).collect();
            assert_eq!(row, vec![-2.0, 1.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn dirichlet_spectrum_matches_formula() {
        let n = 100;
        let d = build_laplacian_1d::<f64>(n, Boundary::Dirichlet, 0.0, std::f64::consts::PI, 1.0).unwrap();
        let ev = d.symmetric_eigenvalues();
        let top = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let h = std::f64::consts::PI / (n as f64 + 1.0);
        let formula = -4.0 / (h * h) * (std::f64::consts::PI / (2.0 * (n as f64 + 1.0))).sin().powi(2);
        assert!((top - formula).abs() < 1e-10);
        assert!((top + 1.0).abs() < 1e-3);
    }

    #[test]
    fn neumann_annihilates_constants() {
        let d = build_laplacian_1d::<f64>(6, Boundary::Neumann, 0.0, 1.0, 0.3).unwrap();
        let g = first_derivative_1d::<f64>(6, Boundary::Neumann, 0.0, 1.0, 1.0).unwrap();
        let ones = nalgebra::DVector::from_element(6, 1.0);
        assert!((&d * &ones).amax() < 1e-12);
        assert!((&g * &ones).amax() < 1e-12);
    }

    #[test]
    fn too_small_grid_rejected() {
        assert!(matches!(
            build_laplacian_1d::<f64>(2, Boundary::Dirichlet, 0.0, 1.0, 1.0),
            Err(Error::Dimension(_))
        ));
    }
}
