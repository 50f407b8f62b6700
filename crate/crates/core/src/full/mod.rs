//! Full-order time integration: snapshot generation and reference trajectories.

mod etd;
mod source;

pub use etd::EtdPropagator;
pub use source::{candidate_times, SnapshotSource, StoredSource, TrajectorySampler};

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{Eigen, SylvesterSolver, Tolerances};
use crate::problems::ProblemSpec;
use crate::scalar::Real;

/// Uniform grid `𝔱ᵢ = i·h`, `h = T_f / n_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T: Real> {
    pub t_final: T,
    pub n_t: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t_final: T, n_t: usize) -> Result<Self> {
        if !(t_final > T::zero()) && n_t > 0 {
            return Err(Error::Domain(format!("final time must be positive, got {t_final}")));
        }
        Ok(TimeGrid { t_final, n_t })
    }

    /// Step size (zero when `n_t = 0`).
    pub fn h(&self) -> T {
        if self.n_t == 0 {
            T::zero()
        } else {
            self.t_final / T::from_count(self.n_t)
        }
    }

    /// `𝔱ᵢ`; the last node is `T_f` exactly.
    pub fn node(&self, i: usize) -> T {
        if i == 0 {
            T::zero()
        } else if i == self.n_t {
            self.t_final
        } else {
            T::from_count(i) * self.t_final / T::from_count(self.n_t.max(1))
        }
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..=self.n_t).map(|i| self.node(i)).collect()
    }
}

/// `n_t = max(300, 2n)`.
pub fn default_steps(n: usize) -> usize {
    300.max(2 * n)
}

/// Every step for `n ≤ 256`, every fifth above.
pub fn default_stride(n: usize) -> usize {
    if n <= 256 {
        1
    } else {
        5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotKind {
    State,
    Nonlinearity,
    ReducedState,
}

impl SnapshotKind {
    pub fn code(self) -> u8 {
        match self {
            SnapshotKind::State => 0,
            SnapshotKind::Nonlinearity => 1,
            SnapshotKind::ReducedState => 2,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(SnapshotKind::State),
            1 => Ok(SnapshotKind::Nonlinearity),
            2 => Ok(SnapshotKind::ReducedState),
            _ => Err(Error::Format(format!("unknown snapshot kind {c}"))),
        }
    }
}

/// Time-stamped, conformal matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotStream<T: Real> {
    pub kind: SnapshotKind,
    pub times: Vec<T>,
    pub matrices: Vec<DMatrix<T>>,
}

impl<T: Real> SnapshotStream<T> {
    pub fn new(kind: SnapshotKind) -> Self {
        SnapshotStream { kind, times: Vec::new(), matrices: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.matrices.first().map(|m| m.shape())
    }

    pub fn push(&mut self, t: T, m: DMatrix<T>) -> Result<()> {
        if let Some(shape) = self.shape() {
            if m.shape() != shape {
                return Err(Error::dim(format!(
                    "snapshot at t = {t} is {}x{}, stream is {}x{}",
                    m.nrows(),
                    m.ncols(),
                    shape.0,
                    shape.1
                )));
            }
        }
        self.times.push(t);
        self.matrices.push(m);
        Ok(())
    }
}

/// Time integrator for the full-order problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Semi-implicit Euler: implicit linear part, explicit `F`.
    Imex,
    /// Exponential Euler.
    Etd,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Imex => "imex",
            Scheme::Etd => "etd",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "imex" => Ok(Scheme::Imex),
            "etd" => Ok(Scheme::Etd),
            other => Err(Error::Config(format!("unknown scheme '{other}' (expected imex or etd)"))),
        }
    }
}

/// `(I − hA)U⁺ + U⁺(−hB) = U + hF`, factored once per step size.
#[derive(Debug, Clone)]
pub struct ImexPropagator<T: Real> {
    h: T,
    solver: SylvesterSolver<T>,
}

impl<T: Real> ImexPropagator<T> {
    pub fn new(a: &DMatrix<T>, b: &DMatrix<T>, h: T, tol: &Tolerances) -> Result<Self> {
        let left = DMatrix::<T>::identity(a.nrows(), a.ncols()) - a * h;
        let right = -(b * h);
        Ok(ImexPropagator { h, solver: SylvesterSolver::with_tolerances(&left, &right, tol)? })
    }

    pub fn step(&self, u: &DMatrix<T>, f: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.solver.solve(&(u + f * self.h))
    }
}

/// A prepared one-step map for a fixed problem and step size.
#[derive(Debug, Clone)]
pub enum Stepper<T: Real> {
    Imex(ImexPropagator<T>),
    Etd(EtdPropagator<T>),
}

impl<T: Real> Stepper<T> {
    pub fn new(spec: &ProblemSpec<T>, scheme: Scheme, h: T, tol: &Tolerances) -> Result<Self> {
        Ok(match scheme {
            Scheme::Imex => Stepper::Imex(ImexPropagator::new(&spec.a, &spec.b, h, tol)?),
            Scheme::Etd => Stepper::Etd(EtdPropagator::new(&spec.a, &spec.b, h, tol)?),
        })
    }

    /// Advances with an already evaluated nonlinearity `f = F(u, t)`.
    pub fn advance(&self, u: &DMatrix<T>, f: &DMatrix<T>) -> Result<DMatrix<T>> {
        match self {
            Stepper::Imex(p) => p.step(u, f),
            Stepper::Etd(p) => p.step(u, f),
        }
    }

    pub fn step(&self, spec: &ProblemSpec<T>, u: &DMatrix<T>, t: T) -> Result<DMatrix<T>> {
        let f = spec.eval_nonlinear(u, t)?;
        self.advance(u, &f)
    }
}

/// One semi-implicit Euler step.
pub fn imex_euler_step<T: Real>(spec: &ProblemSpec<T>, u: &DMatrix<T>, t: T, h: T) -> Result<DMatrix<T>> {
    if !(h > T::zero()) {
        return Err(Error::Domain(format!("step size must be positive, got {h}")));
    }
    ImexPropagator::new(&spec.a, &spec.b, h, &Tolerances::default())?.step(u, &spec.eval_nonlinear(u, t)?)
}

/// One exponential Euler step with precomputed eigendecompositions of `A` and `B`.
pub fn exp_euler_step_full<T: Real>(
    spec: &ProblemSpec<T>,
    eig_a: &Eigen<T>,
    eig_b: &Eigen<T>,
    u: &DMatrix<T>,
    t: T,
    h: T,
) -> Result<DMatrix<T>> {
    if !(h > T::zero()) {
        return Err(Error::Domain(format!("step size must be positive, got {h}")));
    }
    EtdPropagator::from_eigen(eig_a, eig_b, h).step(u, &spec.eval_nonlinear(u, t)?)
}

/// What [`run_full`] records.
#[derive(Debug, Clone, Default)]
pub struct CaptureRequest {
    /// Grid node indices at which to emit `U` and `F(U)` snapshots.
    pub nodes: Vec<usize>,
    /// Store the full trajectory every `stride` steps (plus the final node).
    pub trajectory_stride: Option<usize>,
}

impl CaptureRequest {
    /// Maps capture times onto grid nodes; times off the grid are rejected.
    pub fn at_times<T: Real>(grid: &TimeGrid<T>, times: &[T], trajectory_stride: Option<usize>) -> Result<Self> {
        let h = grid.h();
        let mut nodes = Vec::with_capacity(times.len());
        for &t in times {
            let k = if h == T::zero() { T::zero() } else { (t / h).round() };
            let idx = k.to_usize().unwrap_or(usize::MAX);
            if idx > grid.n_t || (grid.node(idx) - t).abs() > T::lit(1e-9) * (h + T::eps()) {
                return Err(Error::Domain(format!("capture time {t} is not a grid node")));
            }
            nodes.push(idx);
        }
        Ok(CaptureRequest { nodes, trajectory_stride })
    }
}

/// States stored at a subset of grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    /// Grid node index of each stored state.
    pub steps: Vec<usize>,
    pub times: Vec<T>,
    pub states: Vec<DMatrix<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn new() -> Self {
        Trajectory { steps: Vec::new(), times: Vec::new(), states: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push(&mut self, step: usize, t: T, state: DMatrix<T>) {
        self.steps.push(step);
        self.times.push(t);
        self.states.push(state);
    }

    pub fn last(&self) -> Option<&DMatrix<T>> {
        self.states.last()
    }
}

impl<T: Real> Default for Trajectory<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone)]
pub struct FullRun<T: Real> {
    pub trajectory: Trajectory<T>,
    pub states: SnapshotStream<T>,
    pub nonlinear: SnapshotStream<T>,
    /// State at `T_f`.
    pub final_state: DMatrix<T>,
}

pub(crate) fn ensure_bounded<T: Real>(u: &DMatrix<T>, step: usize) -> Result<()> {
    if u.iter().all(|x| x.is_finite()) && u.norm() <= T::lit(1e12) {
        Ok(())
    } else {
        Err(Error::Divergence { step })
    }
}

/// Integrates from `U₀` over `grid`, emitting the requested snapshots.
pub fn run_full<T: Real>(
    spec: &ProblemSpec<T>,
    grid: &TimeGrid<T>,
    scheme: Scheme,
    capture: &CaptureRequest,
) -> Result<FullRun<T>> {
    run_full_with(spec, grid, scheme, capture, &Tolerances::default())
}

pub fn run_full_with<T: Real>(
    spec: &ProblemSpec<T>,
    grid: &TimeGrid<T>,
    scheme: Scheme,
    capture: &CaptureRequest,
    tol: &Tolerances,
) -> Result<FullRun<T>> {
    if let Some(&bad) = capture.nodes.iter().find(|&&k| k > grid.n_t) {
        return Err(Error::Domain(format!("capture node {bad} beyond the last node {}", grid.n_t)));
    }
    if capture.trajectory_stride == Some(0) {
        return Err(Error::Config("trajectory stride must be positive".into()));
    }
    let mut wanted = vec![false; grid.n_t + 1];
    for &k in &capture.nodes {
        wanted[k] = true;
    }
    let stepper = if grid.n_t > 0 { Some(Stepper::new(spec, scheme, grid.h(), tol)?) } else { None };
    let mut states = SnapshotStream::new(SnapshotKind::State);
    let mut nonlinear = SnapshotStream::new(SnapshotKind::Nonlinearity);
    let mut trajectory = Trajectory::new();
    let mut u = spec.u0.clone();

    for i in 0..=grid.n_t {
        let t = grid.node(i);
        if let Some(stride) = capture.trajectory_stride {
            if i % stride == 0 || i == grid.n_t {
                trajectory.push(i, t, u.clone());
            }
        }
        let need_f = wanted[i] || i < grid.n_t;
        let f = if need_f { Some(spec.eval_nonlinear(&u, t)?) } else { None };
        if wanted[i] {
            states.push(t, u.clone())?;
            nonlinear.push(t, f.clone().expect("evaluated above"))?;
        }
        if i < grid.n_t {
            let next = stepper
                .as_ref()
                .expect("stepper exists when n_t > 0")
                .advance(&u, f.as_ref().expect("evaluated above"))?;
            ensure_bounded(&next, i + 1)?;
            u = next;
        }
    }
    Ok(FullRun { trajectory, states, nonlinear, final_state: u })
}
