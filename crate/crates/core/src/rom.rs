//! Reduced model assembly and the online exponential Euler loop.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;

use crate::deim::{reduced_nonlinear, RomDeimFactors};
use crate::error::{Error, Result};
use crate::full::{ensure_bounded, EtdPropagator, Scheme, Stepper, TimeGrid, Trajectory};
use crate::linalg::{general_eig_with, is_symmetric, sym_eig_with, Eigen, SylvesterSolver, Tolerances};
use crate::pod::BasisPair;
use crate::problems::ProblemSpec;
use crate::scalar::Real;

/// `Ẏ = A_k Y + Y B_k + F̂_k(Y, t)`, `Y(0) = Y₀`.
#[derive(Debug, Clone)]
pub struct ReducedModel<T: Real> {
    pub ak: DMatrix<T>,
    pub bk: DMatrix<T>,
    pub y0: DMatrix<T>,
    /// `None` when the eigenbasis was too ill-conditioned; the online loop
    /// then uses Padé exponentials and a Sylvester solve per step.
    pub eig_a: Option<Eigen<T>>,
    pub eig_b: Option<Eigen<T>>,
    pub factors: RomDeimFactors<T>,
    pub ubasis: BasisPair<T>,
    pub spec: ProblemSpec<T>,
    tol: Tolerances,
}

fn decompose<T: Real>(m: &DMatrix<T>, tol: &Tolerances) -> Result<Option<Eigen<T>>> {
    let r = if is_symmetric(m, tol.symmetry) { sym_eig_with(m, tol) } else { general_eig_with(m, tol) };
    match r {
        Ok(e) => Ok(Some(e)),
        Err(Error::Conditioning(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Projects `A`, `B` and `U₀` onto the state bases and decomposes `A_k`, `B_k`.
pub fn assemble<T: Real>(spec: &ProblemSpec<T>, ubasis: &BasisPair<T>, factors: &RomDeimFactors<T>) -> Result<ReducedModel<T>> {
    assemble_with(spec, ubasis, factors, &Tolerances::default())
}

pub fn assemble_with<T: Real>(
    spec: &ProblemSpec<T>,
    ubasis: &BasisPair<T>,
    factors: &RomDeimFactors<T>,
    tol: &Tolerances,
) -> Result<ReducedModel<T>> {
    let (n1, n2) = spec.shape();
    if ubasis.vl.nrows() != n1 || ubasis.wr.nrows() != n2 {
        return Err(Error::dim(format!(
            "bases are for {}x{} states, problem is {n1}x{n2}",
            ubasis.vl.nrows(),
            ubasis.wr.nrows()
        )));
    }
    if factors.reduced_shape() != (ubasis.nu_l(), ubasis.nu_r()) {
        return Err(Error::dim("DEIM factors do not match the state bases"));
    }
    let (v, w) = (&ubasis.vl, &ubasis.wr);
    let ak = v.tr_mul(&(&spec.a * v));
    let bk = w.tr_mul(&(&spec.b * w));
    let y0 = ubasis.project(&spec.u0);
    let eig_a = decompose(&ak, tol)?;
    let eig_b = decompose(&bk, tol)?;
    if eig_a.is_none() || eig_b.is_none() {
        SylvesterSolver::with_tolerances(&ak, &bk, tol).map_err(|e| {
            Error::Assembly(format!(
                "reduced operators have no usable eigenbasis and {e}; try a different basis or scheme"
            ))
        })?;
    }
    Ok(ReducedModel {
        ak,
        bk,
        y0,
        eig_a,
        eig_b,
        factors: factors.clone(),
        ubasis: ubasis.clone(),
        spec: spec.clone(),
        tol: tol.clone(),
    })
}

impl<T: Real> ReducedModel<T> {
    /// `(k₁, k₂)`.
    pub fn dims(&self) -> (usize, usize) {
        self.y0.shape()
    }

    /// Propagator for step `h`, from the stored eigendecompositions when available.
    pub fn propagator(&self, h: T) -> Result<EtdPropagator<T>> {
        match (&self.eig_a, &self.eig_b) {
            (Some(a), Some(b)) => Ok(EtdPropagator::from_eigen(a, b, h)),
            _ => EtdPropagator::dense(&self.ak, &self.bk, h, &self.tol),
        }
    }

    pub fn nonlinear(&self, y: &DMatrix<T>, t: T) -> Result<DMatrix<T>> {
        reduced_nonlinear(&self.factors, &self.spec, y, t)
    }
}

/// One exponential Euler step of the reduced model.
pub fn etd_step<T: Real>(model: &ReducedModel<T>, y: &DMatrix<T>, t: T, h: T) -> Result<DMatrix<T>> {
    if !(h > T::zero()) {
        return Err(Error::Config(format!("step size must be positive, got {h}")));
    }
    model.propagator(h)?.step(y, &model.nonlinear(y, t)?)
}

/// Reduced states at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct RomTrajectory<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<DMatrix<T>>,
    /// Wall time of the stepping loop.
    pub online_seconds: f64,
}

impl<T: Real> RomTrajectory<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &DMatrix<T> {
        self.states.last().expect("trajectory holds at least Y0")
    }

    /// `time,norm_y[,rel_error]` rows.
    pub fn to_csv(&self, errors: Option<&[(T, T)]>) -> String {
        let mut out = String::from(if errors.is_some() { "time,norm_y,rel_error\n" } else { "time,norm_y\n" });
        for (t, y) in self.times.iter().zip(&self.states) {
            let _ = write!(out, "{:.12e},{:.12e}", t.as_f64(), y.norm().as_f64());
            if let Some(errs) = errors {
                match errs.iter().find(|(s, _)| (*s - *t).abs() <= T::lit(1e-12) * (T::one() + t.abs())) {
                    Some((_, e)) => {
                        let _ = write!(out, ",{:.12e}", e.as_f64());
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Sequential ETD loop from `Y₀` over `grid`.
pub fn run_online<T: Real>(model: &ReducedModel<T>, grid: &TimeGrid<T>) -> Result<RomTrajectory<T>> {
    let start = Instant::now();
    let mut times = Vec::with_capacity(grid.n_t + 1);
    let mut states = Vec::with_capacity(grid.n_t + 1);
    times.push(T::zero());
    states.push(model.y0.clone());
    if grid.n_t > 0 {
        let prop = model.propagator(grid.h())?;
        let mut y = model.y0.clone();
        for i in 0..grid.n_t {
            let f = model.nonlinear(&y, grid.node(i))?;
            y = prop.step(&y, &f)?;
            ensure_bounded(&y, i + 1)?;
            times.push(grid.node(i + 1));
            states.push(y.clone());
        }
    }
    Ok(RomTrajectory { times, states, online_seconds: start.elapsed().as_secs_f64() })
}

/// `V_ℓ Y W_rᵀ`.
pub fn lift<T: Real>(ubasis: &BasisPair<T>, y: &DMatrix<T>) -> DMatrix<T> {
    ubasis.lift(y)
}

fn relative<T: Real>(u: &DMatrix<T>, approx: &DMatrix<T>) -> Option<T> {
    let d = u.norm();
    (d > T::zero()).then(|| (u - approx).norm() / d)
}

/// `(1/n) Σ ‖U⁽ʲ⁾ − V_ℓY⁽ʲ⁾W_rᵀ‖_F / ‖U⁽ʲ⁾‖_F` over nodes present in both
/// trajectories with `t > 0` and a nonzero reference.
pub fn average_error<T: Real>(reference: &Trajectory<T>, rom: &RomTrajectory<T>, ubasis: &BasisPair<T>) -> Result<T> {
    let slack = |t: T| T::lit(1e-9) * (T::one() + t.abs());
    let mut errs = Vec::new();
    for (t, u) in reference.times.iter().zip(&reference.states) {
        if *t <= T::zero() {
            continue;
        }
        if let Some(k) = rom.times.iter().position(|s| (*s - *t).abs() <= slack(*t)) {
            if let Some(e) = relative(u, &ubasis.lift(&rom.states[k])) {
                errs.push(e);
            }
        }
    }
    mean(&errs)
}

fn mean<T: Real>(errs: &[T]) -> Result<T> {
    if errs.is_empty() {
        return Err(Error::Report("reference and reduced trajectories share no nodes".into()));
    }
    Ok(errs.iter().fold(T::zero(), |a, &b| a + b) / T::from_count(errs.len()))
}

/// Per-node relative errors against a reference integrated alongside, every
/// `stride` steps, so full states are never stored. Uses the same grid as `rom`.
pub fn reference_errors<T: Real>(
    spec: &ProblemSpec<T>,
    scheme: Scheme,
    rom: &RomTrajectory<T>,
    ubasis: &BasisPair<T>,
    stride: usize,
) -> Result<Vec<(T, T)>> {
    if rom.len() < 2 {
        return Err(Error::Report("reduced trajectory has no steps after t = 0".into()));
    }
    let grid = TimeGrid::new(*rom.times.last().expect("nonempty"), rom.len() - 1)?;
    reference_errors_with(spec, scheme, &grid, stride, |k| ubasis.lift(&rom.states[k]))
}

/// Like [`reference_errors`], for any approximation `lifted(k)` of the state at node `k`.
pub fn reference_errors_with<T: Real, F: FnMut(usize) -> DMatrix<T>>(
    spec: &ProblemSpec<T>,
    scheme: Scheme,
    grid: &TimeGrid<T>,
    stride: usize,
    mut lifted: F,
) -> Result<Vec<(T, T)>> {
    let stride = stride.max(1);
    let n_t = grid.n_t;
    if n_t == 0 {
        return Err(Error::Report("no steps after t = 0".into()));
    }
    let stepper = Stepper::new(spec, scheme, grid.h(), &Tolerances::default())?;
    let mut u = spec.u0.clone();
    let mut out = Vec::new();
    for i in 0..n_t {
        u = stepper.step(spec, &u, grid.node(i))?;
        ensure_bounded(&u, i + 1)?;
        let k = i + 1;
        if k % stride == 0 || k == n_t {
            if let Some(e) = relative(&u, &lifted(k)) {
                out.push((grid.node(k), e));
            }
        }
    }
    Ok(out)
}

pub(crate) fn mean_of<T: Real>(errs: &[(T, T)]) -> Result<T> {
    let e: Vec<T> = errs.iter().map(|&(_, e)| e).collect();
    mean(&e)
}

/// Mean of [`reference_errors`].
pub fn average_error_streaming<T: Real>(
    spec: &ProblemSpec<T>,
    scheme: Scheme,
    rom: &RomTrajectory<T>,
    ubasis: &BasisPair<T>,
    stride: usize,
) -> Result<T> {
    let errs: Vec<T> = reference_errors(spec, scheme, rom, ubasis, stride)?.into_iter().map(|(_, e)| e).collect();
    mean(&errs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deim::{build_deim, precompute_rom_factors};
    use crate::full::{run_full, CaptureRequest};
    use crate::linalg::{expm_pade, phi1};
    use crate::problems::{build_problem, Boundary, Nonlinearity, Params};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn identity_model(spec: &ProblemSpec<f64>) -> ReducedModel<f64> {
        let (n1, n2) = spec.shape();
        let bp = BasisPair::from_bases(DMatrix::identity(n1, n1), DMatrix::identity(n2, n2));
        assemble(spec, &bp, &RomDeimFactors::identity(n1, n2)).unwrap()
    }

    fn scalar(a: f64, b: f64, f: Nonlinearity<f64>) -> ProblemSpec<f64> {
        let m = |x| DMatrix::from_element(1, 1, x);
        ProblemSpec::new("s", m(a), m(b), m(2.0), 1.0, f, vec![], vec![], Boundary::Dirichlet, Params::new()).unwrap()
    }

    #[test]
    fn identity_bases_reproduce_the_problem() {
        let p = build_problem::<f64>("ac1", 10, &Params::new()).unwrap();
        let m = identity_model(&p);
        assert_eq!(m.ak, p.a);
        assert_eq!(m.bk, p.b);
        assert_eq!(m.y0, p.u0);
    }

    #[test]
    fn rayleigh_quotient() {
        let p = build_problem::<f64>("ac1", 8, &Params::new()).unwrap();
        let v = DMatrix::from_fn(8, 1, |i, _| i as f64 + 1.0).normalize();
        let bp = BasisPair::from_bases(v.clone(), v.clone());
        let op = build_deim(&bp).unwrap();
        let fac = precompute_rom_factors(&bp, &bp, &op).unwrap();
        let m = assemble(&p, &bp, &fac).unwrap();
        assert!((m.ak[(0, 0)] - (v.transpose() * &p.a * &v)[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn scalar_etd_closed_form() {
        let c = 0.7;
        let f = Nonlinearity::Pointwise(Arc::new(move |_u, _x, _y, _t| c));
        let p = scalar(-1.0, -0.5, f);
        let m = identity_model(&p);
        let h: f64 = 0.2;
        let z: f64 = -1.5;
        let want = (h * z).exp() * 2.0 + c * ((h * z).exp() - 1.0) / z;
        let got = etd_step(&m, &m.y0, 0.0, h).unwrap()[(0, 0)];
        assert!((got - want).abs() < 1e-14);
        let lin = identity_model(&scalar(-1.0, -0.5, Nonlinearity::Zero));
        let y = etd_step(&lin, &lin.y0, 0.0, h).unwrap()[(0, 0)];
        assert!((y - 2.0 * (h * z).exp()).abs() < 1e-14);
        assert!((phi1(0.0f64) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_steps_and_linear_semigroup() {
        let p = build_problem::<f64>("heat", 12, &Params::new()).unwrap();
        let m = identity_model(&p);
        let g0 = TimeGrid::new(p.t_final, 0).unwrap();
        assert_eq!(run_online(&m, &g0).unwrap().states, vec![p.u0.clone()]);
        let g = TimeGrid::new(p.t_final, 40).unwrap();
        let tr = run_online(&m, &g).unwrap();
        let exact = expm_pade(&(&p.a * p.t_final)).unwrap() * &p.u0 * expm_pade(&(&p.b * p.t_final)).unwrap();
        assert!((tr.last() - &exact).norm() <= 1e-8 * exact.norm());
    }

    #[test]
    fn identity_reduction_matches_full_etd() {
        let p = build_problem::<f64>("ac1", 12, &Params::new()).unwrap();
        let m = identity_model(&p);
        let g = TimeGrid::new(p.t_final, 30).unwrap();
        let rom = run_online(&m, &g).unwrap();
        let cap = CaptureRequest { nodes: vec![], trajectory_stride: Some(1) };
        let full = run_full(&p, &g, Scheme::Etd, &cap).unwrap();
        for (u, y) in full.trajectory.states.iter().zip(&rom.states) {
            assert!((u - y).norm() <= 1e-9 * u.norm().max(1.0));
        }
        assert!(average_error(&full.trajectory, &rom, &m.ubasis).unwrap() < 1e-9);
        assert!(average_error_streaming(&p, Scheme::Etd, &rom, &m.ubasis, 1).unwrap() < 1e-9);
    }

    #[test]
    fn average_error_trivial_cases() {
        let p = build_problem::<f64>("ac1", 8, &Params::new()).unwrap();
        let m = identity_model(&p);
        let g = TimeGrid::new(p.t_final, 5).unwrap();
        let rom = run_online(&m, &g).unwrap();
        let mut reference = Trajectory::new();
        let mut doubled = Trajectory::new();
        for (k, (t, y)) in rom.times.iter().zip(&rom.states).enumerate() {
            reference.push(k, *t, y.clone());
            doubled.push(k, *t, y * 0.5);
        }
        assert_eq!(average_error(&reference, &rom, &m.ubasis).unwrap(), 0.0);
        assert!((average_error(&doubled, &rom, &m.ubasis).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(average_error(&Trajectory::new(), &rom, &m.ubasis), Err(Error::Report(_))));
    }

    #[test]
    fn lift_preserves_frobenius_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = |r: &mut ChaCha8Rng, n, k| DMatrix::from_fn(n, k, |_, _| r.random::<f64>() - 0.5).qr().q();
        let bp = BasisPair::from_bases(q(&mut rng, 20, 4), q(&mut rng, 15, 3));
        let y = DMatrix::from_fn(4, 3, |_, _| rng.random::<f64>());
        assert!((lift(&bp, &y).norm() - y.norm()).abs() < 1e-12);
        assert_eq!(lift(&bp, &DMatrix::zeros(4, 3)), DMatrix::zeros(20, 15));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let p = build_problem::<f64>("ac1", 8, &Params::new()).unwrap();
        let m = identity_model(&p);
        let rom = run_online(&m, &TimeGrid::new(p.t_final, 3).unwrap()).unwrap();
        let csv = rom.to_csv(None);
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("time,norm_y\n"));
    }
}
