use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::laplacian::{build_laplacian_1d, first_derivative_1d, grid_nodes, Boundary};
use crate::error::{Error, Result};
use crate::linalg::is_symmetric;
use crate::scalar::Real;

/// Named real parameters (`eps1`, `eps2`, ...).
pub type Params = BTreeMap<String, f64>;

/// Elementwise map `(u, x, y, t) ↦ f`.
pub type PointwiseFn<T> = Arc<dyn Fn(T, T, T, T) -> T + Send + Sync>;
/// Whole-matrix map `(U, t) ↦ F(U, t)`.
pub type MatrixFn<T> = Arc<dyn Fn(&DMatrix<T>, T) -> DMatrix<T> + Send + Sync>;

/// The nonlinear term `F(U, t)`.
#[derive(Clone)]
pub enum Nonlinearity<T: Real> {
    /// `−(u³ − u)/ε₂²`
    AllenCahn { eps2: T },
    /// `u(u − ½)(1 − u)`
    ReactionCubic,
    Zero,
    /// Any elementwise map of `(u, x, y, t)`.
    Pointwise(PointwiseFn<T>),
    /// A map that is not elementwise; cannot be sampled at selected entries.
    Matrix(MatrixFn<T>),
}

impl<T: Real> fmt::Debug for Nonlinearity<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::AllenCahn { eps2 } => write!(f, "AllenCahn {{ eps2: {eps2} }}"),
            Nonlinearity::ReactionCubic => f.write_str("ReactionCubic"),
            Nonlinearity::Zero => f.write_str("Zero"),
            Nonlinearity::Pointwise(_) => f.write_str("Pointwise(..)"),
            Nonlinearity::Matrix(_) => f.write_str("Matrix(..)"),
        }
    }
}

impl<T: Real> Nonlinearity<T> {
    pub fn is_elementwise(&self) -> bool {
        !matches!(self, Nonlinearity::Matrix(_))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Nonlinearity::Zero)
    }

    /// Scalar value for elementwise maps; `None` for [`Nonlinearity::Matrix`].
    #[inline]
    pub fn point(&self, u: T, x: T, y: T, t: T) -> Option<T> {
        match self {
            Nonlinearity::AllenCahn { eps2 } => Some(-(u * u * u - u) / (*eps2 * *eps2)),
            Nonlinearity::ReactionCubic => Some(u * (u - T::lit(0.5)) * (T::one() - u)),
            Nonlinearity::Zero => Some(T::zero()),
            Nonlinearity::Pointwise(f) => Some(f(u, x, y, t)),
            Nonlinearity::Matrix(_) => None,
        }
    }
}

/// An instance of `U̇ = AU + UB + F(U, t)`, `U(0) = U₀`, on a tensor grid.
#[derive(Debug, Clone)]
pub struct ProblemSpec<T: Real> {
    pub name: String,
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub u0: DMatrix<T>,
    pub t_final: T,
    pub nonlinear: Nonlinearity<T>,
    /// Row coordinates (`x`).
    pub grid_x: Vec<T>,
    /// Column coordinates (`y`).
    pub grid_y: Vec<T>,
    pub bc: Boundary,
    pub params: Params,
}

impl<T: Real> ProblemSpec<T> {
    /// Validates shapes and assembles a problem. Grids default to `0..n` when empty.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        a: DMatrix<T>,
        b: DMatrix<T>,
        u0: DMatrix<T>,
        t_final: T,
        nonlinear: Nonlinearity<T>,
        mut grid_x: Vec<T>,
        mut grid_y: Vec<T>,
        bc: Boundary,
        params: Params,
    ) -> Result<Self> {
        if !a.is_square() || !b.is_square() {
            return Err(Error::dim("A and B must be square"));
        }
        if u0.nrows() != a.nrows() || u0.ncols() != b.nrows() {
            return Err(Error::dim(format!(
                "U0 is {}x{} but A is {}x{} and B is {}x{}",
                u0.nrows(),
                u0.ncols(),
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if grid_x.is_empty() {
            grid_x = (0..a.nrows()).map(T::from_count).collect();
        }
        if grid_y.is_empty() {
            grid_y = (0..b.nrows()).map(T::from_count).collect();
        }
        if grid_x.len() != a.nrows() || grid_y.len() != b.nrows() {
            return Err(Error::dim("grid coordinates do not match the operator sizes"));
        }
        if !(t_final >= T::zero()) {
            return Err(Error::Domain(format!("final time must be nonnegative, got {t_final}")));
        }
        Ok(ProblemSpec { name: name.into(), a, b, u0, t_final, nonlinear, grid_x, grid_y, bc, params })
    }

    /// `(n_x, n_y)`.
    pub fn shape(&self) -> (usize, usize) {
        self.u0.shape()
    }

    pub fn is_elementwise(&self) -> bool {
        self.nonlinear.is_elementwise()
    }

    /// Whether both coefficient matrices are symmetric to `1e-10` relative.
    pub fn is_symmetric(&self) -> bool {
        is_symmetric(&self.a, 1e-10) && is_symmetric(&self.b, 1e-10)
    }

    /// `F(U, t)` on the whole grid.
    pub fn eval_nonlinear(&self, u: &DMatrix<T>, t: T) -> Result<DMatrix<T>> {
        if u.shape() != self.shape() {
            return Err(Error::dim(format!(
                "state is {}x{}, problem is {}x{}",
                u.nrows(),
                u.ncols(),
                self.shape().0,
                self.shape().1
            )));
        }
        match &self.nonlinear {
            Nonlinearity::Zero => Ok(DMatrix::zeros(u.nrows(), u.ncols())),
            Nonlinearity::Matrix(f) => {
                let out = f(u, t);
                if out.shape() != u.shape() {
                    return Err(Error::dim("matrix nonlinearity changed the state shape"));
                }
                Ok(out)
            }
            nl => Ok(DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| {
                nl.point(u[(i, j)], self.grid_x[i], self.grid_y[j], t).unwrap_or_else(T::zero)
            })),
        }
    }

    /// `F` at the selected entries: `usub[a, b]` holds the state at node
    /// `(row_idx[a], col_idx[b])`.
    pub fn eval_nonlinear_at(
        &self,
        usub: &DMatrix<T>,
        row_idx: &[usize],
        col_idx: &[usize],
        t: T,
    ) -> Result<DMatrix<T>> {
        let mut out = DMatrix::zeros(usub.nrows(), usub.ncols());
        self.eval_nonlinear_at_into(usub, row_idx, col_idx, t, &mut out)?;
        Ok(out)
    }

    /// Allocation-free form of [`Self::eval_nonlinear_at`].
    pub fn eval_nonlinear_at_into(
        &self,
        usub: &DMatrix<T>,
        row_idx: &[usize],
        col_idx: &[usize],
        t: T,
        out: &mut DMatrix<T>,
    ) -> Result<()> {
        if !self.is_elementwise() {
            return Err(Error::Unsupported(
                "selected-entry evaluation needs an elementwise nonlinearity".into(),
            ));
        }
        if usub.shape() != (row_idx.len(), col_idx.len()) || out.shape() != usub.shape() {
            return Err(Error::dim(format!(
                "sampled block is {}x{} for {} rows and {} columns",
                usub.nrows(),
                usub.ncols(),
                row_idx.len(),
                col_idx.len()
            )));
        }
        let (nx, ny) = self.shape();
        if row_idx.iter().any(|&i| i >= nx) || col_idx.iter().any(|&j| j >= ny) {
            return Err(Error::dim("interpolation index outside the grid"));
        }
        for (b, &j) in col_idx.iter().enumerate() {
            let y = self.grid_y[j];
            for (a, &i) in row_idx.iter().enumerate() {
                out[(a, b)] = self
                    .nonlinear
                    .point(usub[(a, b)], self.grid_x[i], y, t)
                    .unwrap_or_else(T::zero);
            }
        }
        Ok(())
    }
}

/// Benchmark names accepted by [`build_problem`].
pub const PROBLEM_NAMES: &[&str] = &["ac1", "ac2", "rdc", "heat", "const", "sym"];

fn resolve(name: &str, given: &Params, defaults: &[(&str, f64)]) -> Result<Params> {
    let mut out: Params = defaults.iter().map(|&(k, v)| (k.to_string(), v)).collect();
    for (k, &v) in given {
        if !out.contains_key(k) {
            return Err(Error::Config(format!("problem '{name}' has no parameter '{k}'")));
        }
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::Config(format!("parameter '{k}' must be positive, got {v}")));
        }
        out.insert(k.clone(), v);
    }
    Ok(out)
}

/// Builds a benchmark instance on an `n × n` grid.
///
/// * `ac1`: Allen-Cahn on `[0, 2π]²`, Dirichlet, `u₀ = 0.05 sin x cos y`, `T_f = 5`.
/// * `ac2`: Allen-Cahn on `[−½, ½]²`, periodic, tanh disk, `T_f = 0.075`.
/// * `rdc`: reaction-convection-diffusion on `[0, 1]²`, Neumann, `T_f = 0.3`.
/// * `heat`: the `ac1` operator and initial state with `F ≡ 0`.
/// * `const`: `A = B = 0`, `F ≡ 0`, so `U(t) ≡ U₀`.
/// * `sym`: the `ac1` operator with the symmetric `u₀ = 0.05 sin x sin y`.
pub fn build_problem<T: Real>(name: &str, n: usize, params: &Params) -> Result<ProblemSpec<T>> {
    let key = name.to_ascii_lowercase();
    if !PROBLEM_NAMES.contains(&key.as_str()) {
        return Err(Error::Config(format!(
            "unknown problem '{name}' (expected one of {})",
            PROBLEM_NAMES.join(", ")
        )));
    }
    if n < 8 {
        return Err(Error::dim(format!("benchmark grids need n >= 8, got {n}")));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    match key.as_str() {
        "ac1" | "heat" | "sym" | "const" => {
            let p = if key == "const" {
                resolve(&key, params, &[])?
            } else if key == "heat" {
                resolve(&key, params, &[("eps1", 1e-2)])?
            } else {
                resolve(&key, params, &[("eps1", 1e-2), ("eps2", 1.0)])?
            };
            let bc = Boundary::Dirichlet;
            let xs: Vec<T> = grid_nodes(n, bc, 0.0, two_pi);
            let (a, nonlinear) = match key.as_str() {
                "const" => (DMatrix::zeros(n, n), Nonlinearity::Zero),
                "heat" => (build_laplacian_1d(n, bc, 0.0, two_pi, p["eps1"])?, Nonlinearity::Zero),
                _ => (
                    build_laplacian_1d(n, bc, 0.0, two_pi, p["eps1"])?,
                    Nonlinearity::AllenCahn { eps2: T::lit(p["eps2"]) },
                ),
            };
            let u0 = DMatrix::from_fn(n, n, |i, j| {
                let second = if key == "sym" { xs[j].sin() } else { xs[j].cos() };
                T::lit(0.05) * xs[i].sin() * second
            });
            let b = a.transpose();
            ProblemSpec::new(key.clone(), a, b, u0, T::lit(5.0), nonlinear, xs.clone(), xs, bc, p)
        }
        "ac2" => {
            let p = resolve(&key, params, &[("eps1", 1.0), ("eps2", 0.04)])?;
            let bc = Boundary::Periodic;
            let xs: Vec<T> = grid_nodes(n, bc, -0.5, 0.5);
            let a = build_laplacian_1d(n, bc, -0.5, 0.5, p["eps1"])?;
            let eps2 = p["eps2"];
            let denom = T::lit(2f64.sqrt() * eps2);
            let u0 = DMatrix::from_fn(n, n, |i, j| {
                let r = (xs[i] * xs[i] + xs[j] * xs[j]).sqrt();
                ((T::lit(0.4) - r) / denom).tanh()
            });
            let b = a.transpose();
            let nl = Nonlinearity::AllenCahn { eps2: T::lit(eps2) };
            ProblemSpec::new(key.clone(), a, b, u0, T::lit(0.075), nl, xs.clone(), xs, bc, p)
        }
        "rdc" => {
            let p = resolve(&key, params, &[("eps1", 0.05)])?;
            let bc = Boundary::Neumann;
            let xs: Vec<T> = grid_nodes(n, bc, 0.0, 1.0);
            let op: DMatrix<T> = build_laplacian_1d::<T>(n, bc, 0.0, 1.0, p["eps1"])?
                + first_derivative_1d::<T>(n, bc, 0.0, 1.0, 1.0)?;
            let u0 = DMatrix::from_fn(n, n, |i, j| {
                let (x, y) = (xs[i], xs[j]);
                let q = x * (T::one() - x) * y * (T::one() - y);
                T::lit(0.3) + T::lit(256.0) * q * q
            });
            // U·B applies the y-operator through its transpose.
            let b = op.transpose();
            ProblemSpec::new(key.clone(), op, b, u0, T::lit(0.3), Nonlinearity::ReactionCubic, xs.clone(), xs, bc, p)
        }
        _ => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn none() -> Params {
        Params::new()
    }

    #[test]
    fn ac1_symmetric_with_stated_initial_state() {
        let p = build_problem::<f64>("ac1", 10, &none()).unwrap();
        assert_eq!((&p.a - p.a.transpose()).norm(), 0.0);
        assert_eq!((&p.b - p.b.transpose()).norm(), 0.0);
        for i in 0..10 {
            for j in 0..10 {
                let want = 0.05 * p.grid_x[i].sin() * p.grid_y[j].cos();
                assert!((p.u0[(i, j)] - want).abs() < 1e-16);
            }
        }
        assert_eq!(p.t_final, 5.0);
    }

    #[test]
    fn ac2_initial_state_bounded_and_radial() {
        let mut prm = Params::new();
        prm.insert("eps2".into(), 0.04);
        let p = build_problem::<f64>("ac2", 10, &prm).unwrap();
        assert!(p.u0.iter().all(|&v| v > -1.0 && v < 1.0));
        // node 5 sits at the origin; the state is invariant under x <-> y and x -> -x
        assert!(p.grid_x[5].abs() < 1e-15);
        for i in 1..10 {
            for j in 1..10 {
                assert!((p.u0[(i, j)] - p.u0[(j, i)]).abs() < 1e-15);
                assert!((p.u0[(i, j)] - p.u0[(10 - i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rdc_initial_peak() {
        let mut prm = Params::new();
        prm.insert("eps1".into(), 0.5);
        let even = build_problem::<f64>("rdc", 10, &prm).unwrap();
        assert!(even.u0.max() <= 1.3 + 1e-12);
        let odd = build_problem::<f64>("rdc", 11, &prm).unwrap();
        assert!((odd.u0.max() - 1.3).abs() < 1e-12);
    }

    #[test]
    fn unknown_problem_or_parameter_is_config_error() {
        assert!(matches!(build_problem::<f64>("burgers", 16, &none()), Err(Error::Config(_))));
        let mut prm = Params::new();
        prm.insert("nu".into(), 1.0);
        assert!(matches!(build_problem::<f64>("ac1", 16, &prm), Err(Error::Config(_))));
    }

    #[test]
    fn nonlinear_roots() {
        let ac = build_problem::<f64>("ac1", 8, &none()).unwrap();
        assert_eq!(ac.eval_nonlinear(&DMatrix::zeros(8, 8), 0.0).unwrap(), DMatrix::zeros(8, 8));
        assert_eq!(ac.eval_nonlinear(&DMatrix::from_element(8, 8, 1.0), 0.0).unwrap(), DMatrix::zeros(8, 8));
        let rdc = build_problem::<f64>("rdc", 8, &none()).unwrap();
        assert_eq!(rdc.eval_nonlinear(&DMatrix::from_element(8, 8, 0.5), 0.0).unwrap(), DMatrix::zeros(8, 8));
        let one = DMatrix::from_element(1, 1, 1.0);
        assert_eq!(ac.eval_nonlinear_at(&one, &[0], &[0], 0.0).unwrap()[(0, 0)], 0.0);
        let half = DMatrix::from_element(1, 1, 0.5);
        assert_eq!(rdc.eval_nonlinear_at(&half, &[3], &[6], 0.1).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn selected_entries_match_full_evaluation() {
        let ac = build_problem::<f64>("ac1", 8, &none()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = DMatrix::from_fn(8, 8, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let full = ac.eval_nonlinear(&u, 0.3).unwrap();
        let (rows, cols) = ([1, 4], [2, 6]);
        let usub = crate::linalg::select_block(&u, &rows, &cols);
        let sub = ac.eval_nonlinear_at(&usub, &rows, &cols, 0.3).unwrap();
        assert_eq!(sub, crate::linalg::select_block(&full, &rows, &cols));
    }

    #[test]
    fn matrix_nonlinearity_cannot_be_sampled() {
        let mut p = build_problem::<f64>("ac1", 8, &none()).unwrap();
        p.nonlinear = Nonlinearity::Matrix(Arc::new(|u: &DMatrix<f64>, _| u * u));
        let s = DMatrix::from_element(1, 1, 1.0);
        assert!(matches!(p.eval_nonlinear_at(&s, &[0], &[0], 0.0), Err(Error::Unsupported(_))));
        assert!(p.eval_nonlinear(&DMatrix::identity(8, 8), 0.0).is_ok());
    }

    fn rdc_consistency_error(n: usize) -> f64 {
        let p = build_problem::<f64>("rdc", n, &none()).unwrap();
        let eps1 = p.params["eps1"];
        let pi = std::f64::consts::PI;
        let u = DMatrix::from_fn(n, n, |i, j| (pi * p.grid_x[i]).cos() * (pi * p.grid_y[j]).cos());
        let exact = DMatrix::from_fn(n, n, |i, j| {
            let (x, y) = (p.grid_x[i], p.grid_y[j]);
            let lap = -2.0 * pi * pi * (pi * x).cos() * (pi * y).cos();
            let ux = -pi * (pi * x).sin() * (pi * y).cos();
            let uy = -pi * (pi * x).cos() * (pi * y).sin();
            eps1 * lap + ux + uy
        });
        (&p.a * &u + &u * &p.b - exact).amax()
    }

    #[test]
    fn rdc_operator_is_second_order() {
        let e: Vec<f64> = [32, 64, 128].iter().map(|&n| rdc_consistency_error(n)).collect();
        for w in e.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.8, "observed order {order} from {e:?}");
        }
    }
}
