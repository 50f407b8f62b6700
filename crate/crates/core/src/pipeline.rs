//! End-to-end drivers: offline reduction, online evaluation, the
//! function-approximation comparison, the τ sweep and the cost benches.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::deim::{build_deim_with, precompute_rom_factors, DeimOperator, RomDeimFactors, VectorDeim};
use crate::error::{Error, Result};
use crate::full::{candidate_times, EtdPropagator, Scheme, SnapshotKind, TimeGrid, TrajectorySampler};
use crate::linalg::Tolerances;
use crate::pod::{
    dynamic_2s_pod, effective_n_max, vanilla_pod, PodOutcome, vector_pod, vector_pod_fixed, BasisPair, ErrorNorm, PodOptions,
    SelectionReport, VectorPod, VectorPodOptions,
};
use crate::problems::{AnalyticFunction, AnalyticId, ProblemSpec};
use crate::rom::{assemble_with, reference_errors_with, run_online, ReducedModel, RomTrajectory};
use crate::scalar::Real;

/// Basis construction procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Dynamic,
    Vanilla,
    Vector,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Dynamic => "dynamic",
            Method::Vanilla => "vanilla",
            Method::Vector => "vector",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dynamic" => Ok(Method::Dynamic),
            "vanilla" => Ok(Method::Vanilla),
            "vector" => Ok(Method::Vector),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// Offline-phase knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineOptions {
    pub n_max: usize,
    pub kappa: usize,
    pub tau: f64,
    pub tol: f64,
    /// Steps of the snapshot integrator over `[0, T_f]` (rounded up to a
    /// multiple of the candidate intervals).
    pub n_t: usize,
    pub scheme: Scheme,
    /// Share DEIM indices across sides when the F-stream is symmetric.
    pub use_symmetry: bool,
    pub norm: ErrorNorm,
    pub override_guard: bool,
}

impl Default for OfflineOptions {
    fn default() -> Self {
        OfflineOptions {
            n_max: 40,
            kappa: 50,
            tau: 1e-3,
            tol: 1e-3,
            n_t: 300,
            scheme: Scheme::Imex,
            use_symmetry: false,
            norm: ErrorNorm::Frobenius,
            override_guard: false,
        }
    }
}

impl OfflineOptions {
    fn pod(&self) -> PodOptions {
        PodOptions {
            n_max: self.n_max,
            tol: self.tol,
            kappa: self.kappa,
            tau: self.tau,
            norm: self.norm,
            tolerances: Tolerances::default(),
        }
    }

    fn vector(&self) -> VectorPodOptions {
        VectorPodOptions { n_max: self.n_max, tol: self.tol, tau: self.tau, override_guard: self.override_guard }
    }

    fn sampler<T: Real>(&self, spec: &ProblemSpec<T>) -> Result<TrajectorySampler<T>> {
        let n_max = effective_n_max(self.n_max)?;
        TrajectorySampler::new(spec, n_max, self.n_t, self.scheme, &Tolerances::default())
    }
}

/// Placeholder for a nonlinearity that is identically zero: one unit vector
/// per side, so the interpolation machinery keeps its shape and the reduced
/// nonlinearity evaluates to zero.
fn unit_pair<T: Real>(n1: usize, n2: usize) -> BasisPair<T> {
    let e1 = |n| {
        let mut m = DMatrix::zeros(n, 1);
        m[(0, 0)] = T::one();
        m
    };
    BasisPair::from_bases(e1(n1), e1(n2))
}

fn empty_report<T: Real>() -> SelectionReport<T> {
    SelectionReport {
        phases_used: 0,
        included_times: Vec::new(),
        evaluated_times: Vec::new(),
        per_time_error: Vec::new(),
        phase_mean_errors: Vec::new(),
        peak_storage_entries: 0,
    }
}

/// Everything the offline phase of the two-sided method produces.
#[derive(Debug, Clone)]
pub struct Offline<T: Real> {
    pub ubasis: BasisPair<T>,
    pub fbasis: BasisPair<T>,
    pub deim: DeimOperator<T>,
    pub factors: RomDeimFactors<T>,
    pub model: ReducedModel<T>,
    pub u_report: SelectionReport<T>,
    pub f_report: SelectionReport<T>,
    /// Snapshot generation plus selection and pruning, both streams.
    pub basis_seconds: f64,
    /// Index selection, factor precomputation and model assembly.
    pub deim_seconds: f64,
    /// Sum of the peak accumulator storage of the two streams.
    pub snapshot_entries: usize,
    pub steps_integrated: usize,
}

impl<T: Real> Offline<T> {
    /// Entries of the four basis matrices kept for lifting and reporting.
    pub fn basis_entries(&self) -> usize {
        self.ubasis.vl.len() + self.ubasis.wr.len() + self.fbasis.vl.len() + self.fbasis.wr.len()
    }
}

/// Snapshots, dynamic selection on `U` and `F`, DEIM, assembly.
pub fn build_offline<T: Real>(spec: &ProblemSpec<T>, opts: &OfflineOptions) -> Result<Offline<T>> {
    let start = Instant::now();
    let mut sampler = opts.sampler(spec).map_err(|e| e.in_stage("snapshot setup"))?;
    let pod = opts.pod();
    let u = dynamic_2s_pod(&mut sampler, &pod).map_err(|e| e.in_stage("state basis"))?;
    sampler.set_kind(SnapshotKind::Nonlinearity);
    let f = if spec.nonlinear.is_zero() {
        let (n1, n2) = spec.shape();
        let state = crate::pod::AccumulatorState::new(opts.kappa)?;
        PodOutcome { basis: unit_pair(n1, n2), report: empty_report(), state }
    } else {
        dynamic_2s_pod(&mut sampler, &pod).map_err(|e| e.in_stage("nonlinearity basis"))?
    };
    let basis_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let tol = Tolerances::default();
    let deim = build_deim_with(&f.basis, opts.use_symmetry, &tol).map_err(|e| e.in_stage("deim"))?;
    let factors = precompute_rom_factors(&u.basis, &f.basis, &deim).map_err(|e| e.in_stage("deim"))?;
    let model = assemble_with(spec, &u.basis, &factors, &tol).map_err(|e| e.in_stage("assembly"))?;
    let deim_seconds = start.elapsed().as_secs_f64();

    Ok(Offline {
        snapshot_entries: u.report.peak_storage_entries + f.report.peak_storage_entries,
        steps_integrated: sampler.steps_taken(),
        ubasis: u.basis,
        fbasis: f.basis,
        deim,
        factors,
        model,
        u_report: u.report,
        f_report: f.report,
        basis_seconds,
        deim_seconds,
    })
}

/// Online-phase knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineOptions {
    pub n_t: usize,
    /// Integrator of the reference trajectory.
    pub reference: Scheme,
    /// Compare every `stride` steps.
    pub stride: usize,
    /// Timing repeats; the median is reported.
    pub repeats: usize,
    pub with_reference: bool,
}

impl Default for OnlineOptions {
    fn default() -> Self {
        OnlineOptions { n_t: 300, reference: Scheme::Etd, stride: 1, repeats: 3, with_reference: true }
    }
}

#[derive(Debug, Clone)]
pub struct Online<T: Real> {
    pub rom: RomTrajectory<T>,
    /// `(t, relative error)` at the compared nodes.
    pub errors: Vec<(T, T)>,
    pub mean_error: Option<T>,
    /// Median wall time of the stepping loop.
    pub online_seconds: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v[v.len() / 2]
}

fn mean_error<T: Real>(errors: &[(T, T)]) -> Option<T> {
    crate::rom::mean_of(errors).ok()
}

/// Runs the reduced model and compares with a full reference on the same grid.
pub fn evaluate_online<T: Real>(spec: &ProblemSpec<T>, model: &ReducedModel<T>, opts: &OnlineOptions) -> Result<Online<T>> {
    let grid = TimeGrid::new(spec.t_final, opts.n_t)?;
    let mut times = Vec::new();
    let mut rom = None;
    for _ in 0..opts.repeats.max(1) {
        let r = run_online(model, &grid).map_err(|e| e.in_stage("online"))?;
        times.push(r.online_seconds);
        rom = Some(r);
    }
    let mut rom = rom.expect("at least one repeat");
    rom.online_seconds = median(times);
    let errors = if opts.with_reference && opts.n_t > 0 {
        reference_errors_with(spec, opts.reference, &grid, opts.stride, |k| model.ubasis.lift(&rom.states[k]))
            .map_err(|e| e.in_stage("reference"))?
    } else {
        Vec::new()
    };
    Ok(Online { mean_error: mean_error(&errors), online_seconds: rom.online_seconds, rom, errors })
}

/// Galerkin POD-DEIM on vectorized states: `ẏ = L_k y + M f(S y)`.
#[derive(Debug, Clone)]
pub struct VectorRom<T: Real> {
    /// `N × k`
    pub basis: DMatrix<T>,
    /// `𝕍ᵀ L 𝕍`
    pub lk: DMatrix<T>,
    pub y0: DMatrix<T>,
    /// `𝕍ᵀ Φ (PᵀΦ)⁻¹`
    pub m: DMatrix<T>,
    /// `Pᵀ 𝕍`
    pub s: DMatrix<T>,
    /// Grid position of each interpolation index.
    pub coords: Vec<(usize, usize)>,
    pub shape: (usize, usize),
}

impl<T: Real> VectorRom<T> {
    pub fn assemble(spec: &ProblemSpec<T>, basis: &DMatrix<T>, deim: &VectorDeim<T>) -> Result<Self> {
        let (n1, n2) = spec.shape();
        if basis.nrows() != n1 * n2 || deim.basis.nrows() != n1 * n2 {
            return Err(Error::dim("vector bases do not match the grid"));
        }
        let mut lv = DMatrix::zeros(n1 * n2, basis.ncols());
        for j in 0..basis.ncols() {
            let x = DMatrix::from_column_slice(n1, n2, basis.column(j).as_slice());
            let y = &spec.a * &x + &x * &spec.b;
            lv.column_mut(j).copy_from_slice(y.as_slice());
        }
        let lk = basis.tr_mul(&lv);
        let u0 = DVector::from_column_slice(spec.u0.as_slice());
        let y0 = DMatrix::from_column_slice(basis.ncols(), 1, basis.tr_mul(&u0).as_slice());
        let m = deim.left_factor(basis);
        let s = crate::linalg::select_rows(basis, &deim.idx);
        let coords = deim.idx.iter().map(|&i| (i % n1, i / n1)).collect();
        Ok(VectorRom { basis: basis.clone(), lk, y0, m, s, coords, shape: (n1, n2) })
    }

    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    pub fn nonlinear(&self, spec: &ProblemSpec<T>, y: &DMatrix<T>, t: T) -> Result<DMatrix<T>> {
        let z = &self.s * y;
        let mut f = DMatrix::zeros(z.nrows(), 1);
        for (r, &(i, j)) in self.coords.iter().enumerate() {
            f[(r, 0)] = spec
                .nonlinear
                .point(z[(r, 0)], spec.grid_x[i], spec.grid_y[j], t)
                .ok_or_else(|| Error::Unsupported("vector DEIM needs an elementwise nonlinearity".into()))?;
        }
        Ok(&self.m * f)
    }

    pub fn run(&self, spec: &ProblemSpec<T>, grid: &TimeGrid<T>) -> Result<RomTrajectory<T>> {
        let start = Instant::now();
        let mut times = vec![T::zero()];
        let mut states = vec![self.y0.clone()];
        if grid.n_t > 0 {
            let prop = EtdPropagator::new(&self.lk, &DMatrix::zeros(1, 1), grid.h(), &Tolerances::default())?;
            let mut y = self.y0.clone();
            for i in 0..grid.n_t {
                let f = self.nonlinear(spec, &y, grid.node(i))?;
                y = prop.step(&y, &f)?;
                if !(y.norm() <= T::lit(1e12)) {
                    return Err(Error::Divergence { step: i + 1 });
                }
                times.push(grid.node(i + 1));
                states.push(y.clone());
            }
        }
        Ok(RomTrajectory { times, states, online_seconds: start.elapsed().as_secs_f64() })
    }

    pub fn lift(&self, y: &DMatrix<T>) -> DMatrix<T> {
        let v = &self.basis * y;
        DMatrix::from_column_slice(self.shape.0, self.shape.1, v.as_slice())
    }
}

/// Offline products of the vectorized baseline.
#[derive(Debug, Clone)]
pub struct VectorOffline<T: Real> {
    pub u: VectorPod<T>,
    pub f: VectorPod<T>,
    pub deim: VectorDeim<T>,
    pub rom: VectorRom<T>,
    pub basis_seconds: f64,
    pub deim_seconds: f64,
    /// Stored vectorized snapshots, both streams.
    pub snapshot_entries: usize,
}

impl<T: Real> VectorOffline<T> {
    pub fn basis_entries(&self) -> usize {
        self.u.basis.len() + self.f.basis.len()
    }
}

pub fn build_vector_offline<T: Real>(spec: &ProblemSpec<T>, opts: &OfflineOptions) -> Result<VectorOffline<T>> {
    crate::pod::check_memory_guard(spec.shape(), opts.override_guard)?;
    let start = Instant::now();
    let mut sampler = opts.sampler(spec).map_err(|e| e.in_stage("snapshot setup"))?;
    let u = vector_pod(&mut sampler, &opts.vector()).map_err(|e| e.in_stage("state basis"))?;
    sampler.set_kind(SnapshotKind::Nonlinearity);
    let f = if spec.nonlinear.is_zero() {
        let (n1, n2) = spec.shape();
        let mut basis = DMatrix::zeros(n1 * n2, 1);
        basis[(0, 0)] = T::one();
        VectorPod {
            basis,
            singvals: Vec::new(),
            report: empty_report(),
            snapshot_shape: (n1, n2),
            snapshot_entries: 0,
            basis_entries: n1 * n2,
        }
    } else {
        vector_pod(&mut sampler, &opts.vector()).map_err(|e| e.in_stage("nonlinearity basis"))?
    };
    let basis_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let deim = VectorDeim::new(&f.basis, spec.shape(), opts.override_guard).map_err(|e| e.in_stage("deim"))?;
    let rom = VectorRom::assemble(spec, &u.basis, &deim).map_err(|e| e.in_stage("assembly"))?;
    let deim_seconds = start.elapsed().as_secs_f64();
    Ok(VectorOffline {
        snapshot_entries: u.snapshot_entries + f.snapshot_entries,
        u,
        f,
        deim,
        rom,
        basis_seconds,
        deim_seconds,
    })
}

pub fn evaluate_vector_online<T: Real>(spec: &ProblemSpec<T>, rom: &VectorRom<T>, opts: &OnlineOptions) -> Result<Online<T>> {
    let grid = TimeGrid::new(spec.t_final, opts.n_t)?;
    let mut times = Vec::new();
    let mut last = None;
    for _ in 0..opts.repeats.max(1) {
        let r = rom.run(spec, &grid).map_err(|e| e.in_stage("online"))?;
        times.push(r.online_seconds);
        last = Some(r);
    }
    let mut traj = last.expect("at least one repeat");
    traj.online_seconds = median(times);
    let errors = if opts.with_reference && opts.n_t > 0 {
        reference_errors_with(spec, opts.reference, &grid, opts.stride, |k| rom.lift(&traj.states[k]))
            .map_err(|e| e.in_stage("reference"))?
    } else {
        Vec::new()
    };
    Ok(Online { mean_error: mean_error(&errors), online_seconds: traj.online_seconds, rom: traj, errors })
}

/// One row of the offline/online breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakdownRow {
    pub method: Method,
    pub basis_seconds: f64,
    pub deim_seconds: f64,
    pub offline_entries: usize,
    pub online_seconds: f64,
    pub n_t: usize,
    pub online_entries: usize,
    pub mean_error: Option<f64>,
    /// `(phases, n_s, ν_ℓ, ν_r)` for the state and nonlinearity streams.
    pub u_dims: (usize, usize, usize, usize),
    pub f_dims: (usize, usize, usize, usize),
}

/// Offline + online for each requested method (`vanilla` is not a full pipeline).
pub fn breakdown<T: Real>(
    spec: &ProblemSpec<T>,
    offline: &OfflineOptions,
    online: &OnlineOptions,
    methods: &[Method],
) -> Result<Vec<BreakdownRow>> {
    let mut rows = Vec::new();
    for &method in methods {
        match method {
            Method::Dynamic => {
                let off = build_offline(spec, offline)?;
                let on = evaluate_online(spec, &off.model, online)?;
                rows.push(BreakdownRow {
                    method,
                    basis_seconds: off.basis_seconds,
                    deim_seconds: off.deim_seconds,
                    offline_entries: off.snapshot_entries,
                    online_seconds: on.online_seconds,
                    n_t: online.n_t,
                    online_entries: off.basis_entries(),
                    mean_error: on.mean_error.map(|e| e.as_f64()),
                    u_dims: (off.u_report.phases_used, off.u_report.n_s(), off.ubasis.nu_l(), off.ubasis.nu_r()),
                    f_dims: (off.f_report.phases_used, off.f_report.n_s(), off.fbasis.nu_l(), off.fbasis.nu_r()),
                });
            }
            Method::Vector => {
                let off = build_vector_offline(spec, offline)?;
                let on = evaluate_vector_online(spec, &off.rom, online)?;
                rows.push(BreakdownRow {
                    method,
                    basis_seconds: off.basis_seconds,
                    deim_seconds: off.deim_seconds,
                    offline_entries: off.snapshot_entries,
                    online_seconds: on.online_seconds,
                    n_t: online.n_t,
                    online_entries: off.basis_entries(),
                    mean_error: on.mean_error.map(|e| e.as_f64()),
                    u_dims: (off.u.report.phases_used, off.u.report.n_s(), off.u.k(), off.u.k()),
                    f_dims: (off.f.report.phases_used, off.f.report.n_s(), off.f.k(), off.f.k()),
                });
            }
            Method::Vanilla => {
                return Err(Error::Config("the vanilla procedure is only available for funcapprox".into()));
            }
        }
    }
    Ok(rows)
}

/// Function-approximation knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct FuncApproxOptions {
    pub id: AnalyticId,
    pub n: usize,
    pub n_max: usize,
    pub kappa: usize,
    pub tau: f64,
    pub tol: f64,
    /// Number of equispaced test times for the mean error.
    pub n_test: usize,
    pub override_guard: bool,
}

impl Default for FuncApproxOptions {
    fn default() -> Self {
        FuncApproxOptions {
            id: AnalyticId::Phi1,
            n: 500,
            n_max: 60,
            kappa: 50,
            tau: 1e-3,
            tol: 1e-3,
            n_test: 300,
            override_guard: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuncApproxRow {
    pub method: Method,
    /// `None` for the non-adaptive procedures.
    pub phases: Option<usize>,
    pub n_s: usize,
    pub nu_l: usize,
    /// `None` for the one-sided vector basis.
    pub nu_r: Option<usize>,
    pub basis_seconds: f64,
    pub memory_entries: usize,
    pub mean_error: f64,
}

fn test_error<T: Real>(f: &AnalyticFunction<T>, n_test: usize, err: impl Fn(&DMatrix<T>) -> T) -> Result<f64> {
    let times = candidate_times(f.t_final(), n_test.max(1));
    let mut sum = 0.0;
    for &t in &times {
        sum += err(&f.sample(t)?).as_f64();
    }
    Ok(sum / times.len() as f64)
}

/// Builds bases for `φ` with one method and measures the mean relative
/// reconstruction error over the test times.
pub fn funcapprox<T: Real>(opts: &FuncApproxOptions, method: Method) -> Result<FuncApproxRow> {
    let mut f = AnalyticFunction::<T>::new(opts.id, opts.n)?;
    match method {
        Method::Dynamic => {
            let pod = PodOptions {
                n_max: opts.n_max,
                tol: opts.tol,
                kappa: opts.kappa,
                tau: opts.tau,
                ..PodOptions::default()
            };
            let start = Instant::now();
            let out = dynamic_2s_pod(&mut f, &pod)?;
            let secs = start.elapsed().as_secs_f64();
            Ok(FuncApproxRow {
                method,
                phases: Some(out.report.phases_used),
                n_s: out.report.n_s(),
                nu_l: out.basis.nu_l(),
                nu_r: Some(out.basis.nu_r()),
                basis_seconds: secs,
                memory_entries: out.report.peak_storage_entries,
                mean_error: test_error(&f, opts.n_test, |x| out.basis.relative_error(x))?,
            })
        }
        Method::Vanilla => {
            let times = candidate_times(f.t_final(), opts.n_max);
            let start = Instant::now();
            let (basis, acc) = vanilla_pod(&mut f, &times, opts.kappa, opts.tau)?;
            let secs = start.elapsed().as_secs_f64();
            Ok(FuncApproxRow {
                method,
                phases: None,
                n_s: acc.processed,
                nu_l: basis.nu_l(),
                nu_r: Some(basis.nu_r()),
                basis_seconds: secs,
                memory_entries: acc.storage().peak(),
                mean_error: test_error(&f, opts.n_test, |x| basis.relative_error(x))?,
            })
        }
        Method::Vector => {
            crate::pod::check_memory_guard((opts.n, opts.n), opts.override_guard)?;
            let times = candidate_times(f.t_final(), opts.kappa);
            let start = Instant::now();
            let vp = vector_pod_fixed(&mut f, &times, opts.tau, opts.override_guard)?;
            let secs = start.elapsed().as_secs_f64();
            Ok(FuncApproxRow {
                method,
                phases: None,
                n_s: vp.report.n_s(),
                nu_l: vp.k(),
                nu_r: None,
                basis_seconds: secs,
                memory_entries: vp.report.peak_storage_entries,
                mean_error: test_error(&f, opts.n_test, |x| vp.relative_error(x))?,
            })
        }
    }
}

/// One `(τ, method, stream)` entry of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tau: f64,
    pub method: Method,
    pub stream: SnapshotKind,
    pub phases: usize,
    pub n_s: usize,
    pub dim: usize,
}

/// Snapshot counts as the tolerance varies (`tol = τ` at every point).
pub fn sweep_tau<T: Real>(spec: &ProblemSpec<T>, base: &OfflineOptions, taus: &[f64], methods: &[Method]) -> Result<Vec<SweepRow>> {
    if taus.is_empty() {
        return Err(Error::Config("tau sweep needs at least one value".into()));
    }
    if methods.contains(&Method::Vector) {
        crate::pod::check_memory_guard(spec.shape(), base.override_guard)?;
    }
    let mut sampler = base.sampler(spec)?;
    let mut rows = Vec::new();
    for &tau in taus {
        let opts = OfflineOptions { tau, tol: tau, ..base.clone() };
        for &method in methods {
            for stream in [SnapshotKind::State, SnapshotKind::Nonlinearity] {
                if stream == SnapshotKind::Nonlinearity && spec.nonlinear.is_zero() {
                    continue;
                }
                sampler.set_kind(stream);
                let (phases, n_s, dim) = match method {
                    Method::Dynamic => {
                        let out = dynamic_2s_pod(&mut sampler, &opts.pod())?;
                        (out.report.phases_used, out.report.n_s(), out.basis.nu_l().max(out.basis.nu_r()))
                    }
                    Method::Vector => {
                        let vp = vector_pod(&mut sampler, &opts.vector())?;
                        (vp.report.phases_used, vp.report.n_s(), vp.k())
                    }
                    Method::Vanilla => {
                        return Err(Error::Config("the vanilla procedure has no adaptive snapshot count".into()))
                    }
                };
                rows.push(SweepRow { tau, method, stream, phases, n_s, dim });
            }
        }
    }
    Ok(rows)
}

/// `(vector n_s nondecreasing as τ decreases, dynamic range ≤ vector range)`
/// for one stream; `None` when either method is missing.
pub fn sweep_trend(rows: &[SweepRow], stream: SnapshotKind) -> Option<(bool, bool)> {
    let pick = |m: Method| {
        let mut v: Vec<(f64, usize)> =
            rows.iter().filter(|r| r.method == m && r.stream == stream).map(|r| (r.tau, r.n_s)).collect();
        v.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        v
    };
    let (d, v) = (pick(Method::Dynamic), pick(Method::Vector));
    if d.is_empty() || v.is_empty() {
        return None;
    }
    let range = |x: &[(f64, usize)]| {
        let lo = x.iter().map(|p| p.1).min().unwrap_or(0);
        x.iter().map(|p| p.1).max().unwrap_or(0) - lo
    };
    let monotone = v.windows(2).all(|w| w[1].1 >= w[0].1);
    Some((monotone, range(&d) <= range(&v)))
}

/// Per-step online time at one grid size.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineCostPoint {
    pub n: usize,
    pub k: (usize, usize),
    pub p: (usize, usize),
    pub steps: usize,
    pub seconds_per_step: f64,
}

/// Orthonormal `n × k` matrix of smooth, seeded-perturbed cosine modes.
fn smooth_basis<T: Real>(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<T> {
    let m = DMatrix::from_fn(n, k, |i, j| {
        let x = (i as f64 + 0.5) / n as f64;
        T::lit((std::f64::consts::PI * j as f64 * x).cos() + 1e-3 * (rng.random::<f64>() - 0.5))
    });
    m.qr().q()
}

/// Times the reduced loop at fixed `(k, p)` for each `n`, with synthetic
/// smooth bases so no offline run is needed. Median of `repeats`.
pub fn online_cost_scan<T: Real>(
    build: impl Fn(usize) -> Result<ProblemSpec<T>>,
    ns: &[usize],
    k: (usize, usize),
    p: (usize, usize),
    steps: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<OnlineCostPoint>> {
    let mut out = Vec::new();
    for &n in ns {
        let spec = build(n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n1, n2) = spec.shape();
        let ub = BasisPair::from_bases(smooth_basis(n1, k.0, &mut rng), smooth_basis(n2, k.1, &mut rng));
        let fb = BasisPair::from_bases(smooth_basis(n1, p.0, &mut rng), smooth_basis(n2, p.1, &mut rng));
        let deim = build_deim_with(&fb, false, &Tolerances::default())?;
        let factors = precompute_rom_factors(&ub, &fb, &deim)?;
        let model = assemble_with(&spec, &ub, &factors, &Tolerances::default())?;
        let grid = TimeGrid::new(spec.t_final, steps)?;
        let mut times = Vec::new();
        for _ in 0..repeats.max(1) {
            times.push(run_online(&model, &grid)?.online_seconds / steps.max(1) as f64);
        }
        out.push(OnlineCostPoint { n, k, p, steps, seconds_per_step: median(times) });
    }
    Ok(out)
}

/// Peak snapshot storage (entries) of the dynamic and vector procedures on
/// the same problem, both streams summed.
pub fn snapshot_storage<T: Real>(spec: &ProblemSpec<T>, opts: &OfflineOptions) -> Result<(usize, usize)> {
    let mut sampler = opts.sampler(spec)?;
    let pod = opts.pod();
    let mut dynamic = 0;
    let mut vector = 0;
    for kind in [SnapshotKind::State, SnapshotKind::Nonlinearity] {
        if kind == SnapshotKind::Nonlinearity && spec.nonlinear.is_zero() {
            continue;
        }
        sampler.set_kind(kind);
        dynamic += dynamic_2s_pod(&mut sampler, &pod)?.report.peak_storage_entries;
        vector += vector_pod(&mut sampler, &opts.vector())?.snapshot_entries;
    }
    Ok((dynamic, vector))
}
