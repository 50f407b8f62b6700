//! Two-sided proper orthogonal decomposition.
//!
//! [`AccumulatorState`] keeps the `κ` dominant singular triplets seen across
//! all processed snapshots; [`dynamic_2s_pod`] decides which snapshots to
//! process, in three phases of increasing time resolution; [`prune`] turns the
//! accumulated factors into orthonormal left and right bases. The vanilla and
//! vectorized procedures are kept as baselines.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::full::{candidate_times, SnapshotSource};
use crate::linalg::{
    is_symmetric, orthonormal_range, select_columns, spectral_norm, thin_svd, truncated_svd_with, Tolerances,
};
use crate::memory::StorageCounter;
use crate::scalar::Real;

/// Singular values below this fraction of a snapshot's largest are treated as
/// numerical noise and not accumulated (the accuracy floor of a Lanczos `svds`).
pub const DROP_RATIO: f64 = 1e-10;

/// Largest grid size the vectorized baseline accepts without an override.
pub const VECTOR_GUARD_N: usize = 512;

/// Norm used in the snapshot inclusion test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorNorm {
    #[default]
    Frobenius,
    Spectral,
}

fn stream_err(time: f64, e: Error) -> Error {
    match e {
        Error::Stream { .. } => e,
        other => Error::Stream { time, source: Box::new(other) },
    }
}

/// Running `(Ṽ, Σ̃, Ŵ)` of the dynamic selection procedure, capped at `κ` triplets.
#[derive(Debug, Clone)]
pub struct AccumulatorState<T: Real> {
    /// `n_x × r`, unit-norm columns.
    pub vt: DMatrix<T>,
    /// Retained singular values, nonincreasing.
    pub st: Vec<T>,
    /// `n_y × r`, unit-norm columns.
    pub wh: DMatrix<T>,
    pub kappa: usize,
    /// Largest singular value dropped so far (including each snapshot's `σ_{κ+1}`).
    pub sigma_discard_max: T,
    pub count_processed: usize,
    /// Processing index of the snapshot each retained column came from.
    pub origins: Vec<usize>,
    /// Whether every processed snapshot was symmetric.
    pub all_symmetric: bool,
    storage: StorageCounter,
    tol: Tolerances,
}

impl<T: Real> AccumulatorState<T> {
    pub fn new(kappa: usize) -> Result<Self> {
        Self::with_tolerances(kappa, Tolerances::default())
    }

    pub fn with_tolerances(kappa: usize, tol: Tolerances) -> Result<Self> {
        if kappa == 0 {
            return Err(Error::Config("kappa must be positive".into()));
        }
        Ok(AccumulatorState {
            vt: DMatrix::zeros(0, 0),
            st: Vec::new(),
            wh: DMatrix::zeros(0, 0),
            kappa,
            sigma_discard_max: T::zero(),
            count_processed: 0,
            origins: Vec::new(),
            all_symmetric: true,
            storage: StorageCounter::new(),
            tol,
        })
    }

    pub fn rank(&self) -> usize {
        self.st.len()
    }

    pub fn is_empty(&self) -> bool {
        self.st.is_empty()
    }

    /// Entry counts of the factor storage (current and peak).
    pub fn storage(&self) -> StorageCounter {
        self.storage
    }

    /// Appends the leading triplets of `xi` and keeps the `κ` largest overall.
    pub fn accumulate(&mut self, xi: &DMatrix<T>) -> Result<()> {
        if self.count_processed > 0 && (self.vt.nrows(), self.wh.nrows()) != xi.shape() {
            return Err(stream_err(
                f64::NAN,
                Error::dim(format!(
                    "snapshot is {}x{}, accumulator holds {}x{} factors",
                    xi.nrows(),
                    xi.ncols(),
                    self.vt.nrows(),
                    self.wh.nrows()
                )),
            ));
        }
        let (nx, ny) = xi.shape();
        if self.count_processed == 0 {
            self.vt = DMatrix::zeros(nx, 0);
            self.wh = DMatrix::zeros(ny, 0);
        }
        let snap = self.count_processed;
        self.count_processed += 1;
        self.all_symmetric = self.all_symmetric && is_symmetric(xi, self.tol.symmetry);

        let want = (self.kappa + 1).min(nx.min(ny));
        let svd = truncated_svd_with(xi, want, &self.tol)?;
        let s1 = svd.s[0];
        let keep_new = svd
            .s
            .iter()
            .take(self.kappa)
            .take_while(|&&s| s1 > T::zero() && s > T::lit(DROP_RATIO) * s1)
            .count();
        for &s in &svd.s[keep_new..] {
            self.sigma_discard_max = self.sigma_discard_max.max(s);
        }
        if keep_new == 0 {
            return Ok(());
        }
        self.storage.alloc(keep_new * (nx + ny));

        // Old entries first, so the stable sort keeps them ahead on ties.
        let r = self.rank();
        let mut merged: Vec<(T, bool, usize)> = (0..r).map(|k| (self.st[k], false, k)).collect();
        merged.extend((0..keep_new).map(|k| (svd.s[k], true, k)));
        merged.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        for &(s, _, _) in merged.iter().skip(self.kappa) {
            self.sigma_discard_max = self.sigma_discard_max.max(s);
        }
        merged.truncate(self.kappa);

        let col = |fresh: bool, k: usize, old: &DMatrix<T>, new: &DMatrix<T>| {
            if fresh {
                new.column(k).clone_owned()
            } else {
                old.column(k).clone_owned()
            }
        };
        let vcols: Vec<DVector<T>> = merged.iter().map(|&(_, f, k)| col(f, k, &self.vt, &svd.u)).collect();
        let wcols: Vec<DVector<T>> = merged.iter().map(|&(_, f, k)| col(f, k, &self.wh, &svd.v)).collect();
        self.origins = merged.iter().map(|&(_, f, k)| if f { snap } else { self.origins[k] }).collect();
        self.st = merged.iter().map(|&(s, _, _)| s).collect();
        self.vt = DMatrix::from_columns(&vcols);
        self.wh = DMatrix::from_columns(&wcols);
        self.storage.set(self.rank() * (nx + ny));
        Ok(())
    }
}

/// By-value form of [`AccumulatorState::accumulate`].
pub fn accumulate<T: Real>(mut state: AccumulatorState<T>, xi: &DMatrix<T>) -> Result<AccumulatorState<T>> {
    state.accumulate(xi)?;
    Ok(state)
}

/// Orthonormal bases of `Range(Ṽ)` and `Range(Ŵ)`.
#[derive(Debug, Clone)]
pub struct Projectors<T: Real> {
    pub ql: DMatrix<T>,
    pub qr: DMatrix<T>,
}

impl<T: Real> Projectors<T> {
    pub fn from_state(state: &AccumulatorState<T>) -> Self {
        Projectors { ql: orthonormal_range(&state.vt, 1e-12), qr: orthonormal_range(&state.wh, 1e-12) }
    }

    /// `Ξ − Π_ℓ Ξ Π_r`.
    pub fn residual(&self, xi: &DMatrix<T>) -> DMatrix<T> {
        let c = self.ql.tr_mul(xi) * &self.qr;
        xi - &self.ql * c * self.qr.transpose()
    }
}

/// Relative error `‖Ξ − Π_ℓ Ξ Π_r‖ / ‖Ξ‖` of the current two-sided space.
/// Zero for the zero matrix; one for an empty state.
pub fn inclusion_error<T: Real>(xi: &DMatrix<T>, state: &AccumulatorState<T>) -> Result<T> {
    if state.is_empty() {
        return Ok(if xi.norm() == T::zero() { T::zero() } else { T::one() });
    }
    inclusion_error_with(xi, &Projectors::from_state(state), ErrorNorm::Frobenius)
}

pub fn inclusion_error_with<T: Real>(xi: &DMatrix<T>, proj: &Projectors<T>, norm: ErrorNorm) -> Result<T> {
    if xi.nrows() != proj.ql.nrows() || xi.ncols() != proj.qr.nrows() {
        return Err(Error::dim("snapshot does not match the projector sizes"));
    }
    let residual = proj.residual(xi);
    Ok(match norm {
        ErrorNorm::Frobenius => {
            let d = xi.norm();
            if d == T::zero() {
                T::zero()
            } else {
                residual.norm() / d
            }
        }
        ErrorNorm::Spectral => {
            let d = spectral_norm(xi);
            if d == T::zero() {
                T::zero()
            } else {
                spectral_norm(&residual) / d
            }
        }
    })
}

/// Orthonormal left/right bases of a snapshot family.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisPair<T: Real> {
    /// `n_x × ν_ℓ`
    pub vl: DMatrix<T>,
    /// `n_y × ν_r`
    pub wr: DMatrix<T>,
    /// Retained singular values on each side.
    pub singvals_l: Vec<T>,
    pub singvals_r: Vec<T>,
    pub tau: f64,
    pub kappa: usize,
    pub n_max: usize,
    /// Set when every snapshot was symmetric, so `Range(V_ℓ) = Range(W_r)`.
    pub symmetric: bool,
}

impl<T: Real> BasisPair<T> {
    /// Wraps explicit bases (singular values set to one).
    pub fn from_bases(vl: DMatrix<T>, wr: DMatrix<T>) -> Self {
        let (a, b) = (vl.ncols(), wr.ncols());
        BasisPair {
            vl,
            wr,
            singvals_l: vec![T::one(); a],
            singvals_r: vec![T::one(); b],
            tau: 0.0,
            kappa: a.max(b),
            n_max: 0,
            symmetric: false,
        }
    }

    pub fn nu_l(&self) -> usize {
        self.vl.ncols()
    }

    pub fn nu_r(&self) -> usize {
        self.wr.ncols()
    }

    /// `V_ℓᵀ X W_r`.
    pub fn project(&self, x: &DMatrix<T>) -> DMatrix<T> {
        self.vl.tr_mul(x) * &self.wr
    }

    /// `V_ℓ Y W_rᵀ`.
    pub fn lift(&self, y: &DMatrix<T>) -> DMatrix<T> {
        &self.vl * y * self.wr.transpose()
    }

    /// `‖X − V_ℓV_ℓᵀ X W_rW_rᵀ‖_F / ‖X‖_F`.
    pub fn relative_error(&self, x: &DMatrix<T>) -> T {
        let d = x.norm();
        if d == T::zero() {
            return T::zero();
        }
        (x - self.lift(&self.project(x))).norm() / d
    }
}

/// Smallest `ν ≥ 1` with `‖s[ν..]‖₂ ≤ (τ/√n_max)·‖s‖₂`.
pub fn truncation_rank<T: Real>(s: &[T], tau: f64, n_max: usize) -> usize {
    if s.is_empty() {
        return 0;
    }
    let mut suffix = vec![T::zero(); s.len() + 1];
    for k in (0..s.len()).rev() {
        suffix[k] = suffix[k + 1] + s[k] * s[k];
    }
    let threshold = T::lit(tau / (n_max.max(1) as f64).sqrt()) * suffix[0].sqrt();
    (1..=s.len()).find(|&nu| suffix[nu].sqrt() <= threshold).unwrap_or(s.len())
}

fn weighted_factor<T: Real>(m: &DMatrix<T>, s: &[T]) -> DMatrix<T> {
    let mut out = m.clone();
    for (j, &sj) in s.iter().enumerate() {
        out.column_mut(j).scale_mut(sj.sqrt());
    }
    out
}

/// Leading left singular vectors of `m`, truncated by the tail rule.
fn truncated_range<T: Real>(m: &DMatrix<T>, tau: f64, n_max: usize, tol: &Tolerances) -> Result<(DMatrix<T>, Vec<T>)> {
    let r = m.nrows().min(m.ncols());
    let svd = truncated_svd_with(m, r, tol)?;
    let nu = truncation_rank(&svd.s, tau, n_max).max(1);
    Ok((svd.u.columns(0, nu).into_owned(), svd.s[..nu].to_vec()))
}

/// SVDs of `ṼΣ̃^{1/2}` and `ŴΣ̃^{1/2}`, truncated so the discarded tail is at
/// most `(τ/√n_max)` of the total in Frobenius norm.
pub fn prune<T: Real>(state: &AccumulatorState<T>, tau: f64, n_max: usize) -> Result<BasisPair<T>> {
    if state.is_empty() {
        return Err(Error::Rank("cannot prune an empty accumulator".into()));
    }
    check_tau(tau)?;
    let (vl, singvals_l) = truncated_range(&weighted_factor(&state.vt, &state.st), tau, n_max, &state.tol)?;
    let (wr, singvals_r) = truncated_range(&weighted_factor(&state.wh, &state.st), tau, n_max, &state.tol)?;
    Ok(BasisPair {
        vl,
        wr,
        singvals_l,
        singvals_r,
        tau,
        kappa: state.kappa,
        n_max,
        symmetric: state.all_symmetric,
    })
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("tau must lie in (0, 1), got {tau}")))
    }
}

/// `n_max` rounded down to a multiple of four (at least four).
pub fn effective_n_max(n_max: usize) -> Result<usize> {
    let m = n_max - n_max % 4;
    if m < 4 {
        return Err(Error::Config(format!("n_max must be at least 4, got {n_max}")));
    }
    Ok(m)
}

/// Candidate indices of the three phases: stride four from 0, stride four
/// from 2 (the midpoints), then the odd indices.
pub fn phase_sets(n_max: usize) -> Result<[Vec<usize>; 3]> {
    let m = effective_n_max(n_max)?;
    Ok([(0..m).step_by(4).collect(), (2..m).step_by(4).collect(), (1..m).step_by(2).collect()])
}

/// Parameters of the dynamic procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct PodOptions {
    pub n_max: usize,
    /// Inclusion threshold on `εᵢ`.
    pub tol: f64,
    pub kappa: usize,
    /// Truncation tolerance of the pruning step.
    pub tau: f64,
    pub norm: ErrorNorm,
    pub tolerances: Tolerances,
}

impl Default for PodOptions {
    fn default() -> Self {
        PodOptions {
            n_max: 40,
            tol: 1e-3,
            kappa: 50,
            tau: 1e-3,
            norm: ErrorNorm::Frobenius,
            tolerances: Tolerances::default(),
        }
    }
}

/// What the adaptive selection did.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport<T: Real> {
    pub phases_used: usize,
    /// Times of the processed snapshots, seed first.
    pub included_times: Vec<T>,
    /// Every time at which `εᵢ` was evaluated, in evaluation order.
    pub evaluated_times: Vec<T>,
    pub per_time_error: Vec<T>,
    pub phase_mean_errors: Vec<T>,
    /// Peak number of stored entries in the accumulated factors or snapshots.
    pub peak_storage_entries: usize,
}

impl<T: Real> SelectionReport<T> {
    /// `n_s`.
    pub fn n_s(&self) -> usize {
        self.included_times.len()
    }
}

#[derive(Debug, Clone)]
pub struct PodOutcome<T: Real> {
    pub basis: BasisPair<T>,
    pub report: SelectionReport<T>,
    pub state: AccumulatorState<T>,
}

/// Adaptive two-sided POD over `n_max` equispaced candidate times.
///
/// Seeds with `Ξ(t₀)`, then walks the phases; a snapshot is accumulated when
/// its `εᵢ` exceeds `tol`, and the walk stops after the first phase whose
/// mean `εᵢ` is at most `tol`. The seed is not part of the phase-one mean.
pub fn dynamic_2s_pod<T: Real, S: SnapshotSource<T> + ?Sized>(source: &mut S, opts: &PodOptions) -> Result<PodOutcome<T>> {
    check_tau(opts.tau)?;
    if !(opts.tol >= 0.0) {
        return Err(Error::Config(format!("tol must be nonnegative, got {}", opts.tol)));
    }
    let n_max = effective_n_max(opts.n_max)?;
    let sets = phase_sets(n_max)?;
    let times = candidate_times(source.t_final(), n_max);
    let tol = T::lit(opts.tol);
    let mut state = AccumulatorState::with_tolerances(opts.kappa, opts.tolerances.clone())?;

    let mut fetch = |i: usize| source.snapshot(times[i]).map_err(|e| stream_err(times[i].as_f64(), e));
    let seed = fetch(0)?;
    state.accumulate(&seed).map_err(|e| stream_err(0.0, e))?;
    let mut included = vec![times[0]];
    let (mut evaluated, mut errors, mut means) = (Vec::new(), Vec::new(), Vec::new());
    let mut proj: Option<Projectors<T>> = None;
    let mut phases_used = 0;

    for set in &sets {
        phases_used += 1;
        let (mut sum, mut count) = (T::zero(), 0usize);
        for &i in set.iter().filter(|&&i| i != 0) {
            let xi = fetch(i)?;
            let eps = if state.is_empty() {
                if xi.norm() == T::zero() {
                    T::zero()
                } else {
                    T::one()
                }
            } else {
                let p = proj.get_or_insert_with(|| Projectors::from_state(&state));
                inclusion_error_with(&xi, p, opts.norm)?
            };
            evaluated.push(times[i]);
            errors.push(eps);
            count += 1;
            if eps > tol {
                state.accumulate(&xi).map_err(|e| stream_err(times[i].as_f64(), e))?;
                included.push(times[i]);
                // The phase mean judges the space as it stands after the
                // inclusion, so an included time contributes its new error.
                let p = proj.insert(Projectors::from_state(&state));
                sum += inclusion_error_with(&xi, p, opts.norm)?;
            } else {
                sum += eps;
            }
        }
        let mean = if count == 0 { T::zero() } else { sum / T::from_count(count) };
        means.push(mean);
        if mean <= tol {
            break;
        }
    }

    let basis = prune(&state, opts.tau, n_max)?;
    let report = SelectionReport {
        phases_used,
        included_times: included,
        evaluated_times: evaluated,
        per_time_error: errors,
        phase_mean_errors: means,
        peak_storage_entries: state.storage().peak(),
    };
    Ok(PodOutcome { basis, report, state })
}

/// Weighted factors of the vanilla procedure: each side is kept as `U·Σ`
/// from its last orthogonal reduction.
#[derive(Debug, Clone)]
pub struct VanillaBases<T: Real> {
    pub left: DMatrix<T>,
    pub right: DMatrix<T>,
    pub kappa: usize,
    pub processed: usize,
    storage: StorageCounter,
    tol: Tolerances,
}

fn reduce_factor<T: Real>(aug: DMatrix<T>, kappa: usize) -> DMatrix<T> {
    if aug.ncols() == 0 {
        return aug;
    }
    let n = aug.nrows();
    let qr = aug.qr();
    let (q, r) = (qr.q(), qr.r());
    let (u, sv, _) = thin_svd(&r);
    let s1 = sv.first().copied().unwrap_or_else(T::zero);
    let keep: Vec<usize> =
        (0..sv.len()).take(kappa).filter(|&k| s1 > T::zero() && sv[k] > T::lit(DROP_RATIO) * s1).collect();
    let mut out = &q * select_columns(&u, &keep);
    for (j, &k) in keep.iter().enumerate() {
        out.column_mut(j).scale_mut(sv[k]);
    }
    debug_assert_eq!(out.nrows(), n);
    out
}

impl<T: Real> VanillaBases<T> {
    pub fn new(kappa: usize) -> Result<Self> {
        if kappa == 0 {
            return Err(Error::Config("kappa must be positive".into()));
        }
        Ok(VanillaBases {
            left: DMatrix::zeros(0, 0),
            right: DMatrix::zeros(0, 0),
            kappa,
            processed: 0,
            storage: StorageCounter::new(),
            tol: Tolerances::default(),
        })
    }

    pub fn storage(&self) -> StorageCounter {
        self.storage
    }

    pub fn update(&mut self, xi: &DMatrix<T>) -> Result<()> {
        let (nx, ny) = xi.shape();
        if self.processed == 0 {
            self.left = DMatrix::zeros(nx, 0);
            self.right = DMatrix::zeros(ny, 0);
        } else if (self.left.nrows(), self.right.nrows()) != (nx, ny) {
            return Err(Error::dim("snapshot does not match the vanilla bases"));
        }
        let (l, r) = vanilla_update_with(&self.left, &self.right, xi, self.kappa, &self.tol)?;
        self.storage.alloc((l.ncols() + self.left.ncols()) * nx + (r.ncols() + self.right.ncols()) * ny);
        self.left = l;
        self.right = r;
        self.storage.set(self.left.len() + self.right.len());
        self.processed += 1;
        Ok(())
    }

    /// Orthonormal bases from the weighted factors, truncated by the tail rule.
    pub fn finish(&self, tau: f64, n_max: usize) -> Result<BasisPair<T>> {
        check_tau(tau)?;
        if self.left.ncols() == 0 || self.right.ncols() == 0 {
            return Err(Error::Rank("vanilla bases are empty".into()));
        }
        let (vl, singvals_l) = truncated_range(&self.left, tau, n_max, &self.tol)?;
        let (wr, singvals_r) = truncated_range(&self.right, tau, n_max, &self.tol)?;
        Ok(BasisPair { vl, wr, singvals_l, singvals_r, tau, kappa: self.kappa, n_max, symmetric: false })
    }
}

/// One vanilla step on weighted factors: append `Vⱼ Σⱼ^{1/2}` and `Wⱼ Σⱼ^{1/2}`,
/// reduce each side by QR + SVD to at most `κ` columns.
pub fn vanilla_update<T: Real>(
    vl: &DMatrix<T>,
    wr: &DMatrix<T>,
    xi: &DMatrix<T>,
    kappa: usize,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    vanilla_update_with(vl, wr, xi, kappa, &Tolerances::default())
}

fn vanilla_update_with<T: Real>(
    vl: &DMatrix<T>,
    wr: &DMatrix<T>,
    xi: &DMatrix<T>,
    kappa: usize,
    tol: &Tolerances,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let (nx, ny) = xi.shape();
    let vl = if vl.ncols() == 0 { DMatrix::zeros(nx, 0) } else { vl.clone() };
    let wr = if wr.ncols() == 0 { DMatrix::zeros(ny, 0) } else { wr.clone() };
    if vl.nrows() != nx || wr.nrows() != ny {
        return Err(Error::dim("snapshot does not match the vanilla bases"));
    }
    let svd = truncated_svd_with(xi, kappa.min(nx.min(ny)), tol)?;
    let s1 = svd.s[0];
    let k = svd.s.iter().take_while(|&&s| s1 > T::zero() && s > T::lit(DROP_RATIO) * s1).count();
    let s = &svd.s[..k];
    let append = |base: DMatrix<T>, new: DMatrix<T>| {
        let fresh = weighted_factor(&new.columns(0, k).into_owned(), s);
        let mut cols: Vec<DVector<T>> = base.column_iter().map(|c| c.clone_owned()).collect();
        cols.extend(fresh.column_iter().map(|c| c.clone_owned()));
        if cols.is_empty() {
            DMatrix::zeros(base.nrows(), 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    };
    let left = reduce_factor(append(vl, svd.u.clone()), kappa);
    let right = reduce_factor(append(wr, svd.v.clone()), kappa);
    Ok((left, right))
}

/// Processes every listed time with the vanilla procedure.
pub fn vanilla_pod<T: Real, S: SnapshotSource<T> + ?Sized>(
    source: &mut S,
    times: &[T],
    kappa: usize,
    tau: f64,
) -> Result<(BasisPair<T>, VanillaBases<T>)> {
    let mut acc = VanillaBases::new(kappa)?;
    for &t in times {
        let xi = source.snapshot(t).map_err(|e| stream_err(t.as_f64(), e))?;
        acc.update(&xi)?;
    }
    let basis = acc.finish(tau, times.len())?;
    Ok((basis, acc))
}

/// Parameters of the vectorized baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorPodOptions {
    pub n_max: usize,
    pub tol: f64,
    pub tau: f64,
    /// Allow grids larger than [`VECTOR_GUARD_N`].
    pub override_guard: bool,
}

impl Default for VectorPodOptions {
    fn default() -> Self {
        VectorPodOptions { n_max: 40, tol: 1e-3, tau: 1e-3, override_guard: false }
    }
}

/// One-sided POD basis of vectorized snapshots.
#[derive(Debug, Clone)]
pub struct VectorPod<T: Real> {
    /// `N × k`, `N = n_x·n_y`, orthonormal columns.
    pub basis: DMatrix<T>,
    pub singvals: Vec<T>,
    pub report: SelectionReport<T>,
    pub snapshot_shape: (usize, usize),
    /// Peak entries held in stored snapshots and in the working basis.
    pub snapshot_entries: usize,
    pub basis_entries: usize,
}

impl<T: Real> VectorPod<T> {
    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    /// `‖ξ − VVᵀξ‖ / ‖ξ‖` for the vectorized `x`.
    pub fn relative_error(&self, x: &DMatrix<T>) -> T {
        let v = DVector::from_column_slice(x.as_slice());
        let d = v.norm();
        if d == T::zero() {
            return T::zero();
        }
        let c = self.basis.tr_mul(&v);
        (v - &self.basis * c).norm() / d
    }
}

/// Refuses grids above the guard unless overridden.
pub fn check_memory_guard(shape: (usize, usize), override_guard: bool) -> Result<()> {
    let n = shape.0.max(shape.1);
    if n > VECTOR_GUARD_N && !override_guard {
        return Err(Error::MemoryGuard(format!(
            "vectorized snapshots of a {}x{} grid need {} entries each; n > {VECTOR_GUARD_N} requires the override flag",
            shape.0,
            shape.1,
            shape.0 * shape.1
        )));
    }
    Ok(())
}

struct VectorAccumulator<T: Real> {
    q: Vec<DVector<T>>,
    snaps: Vec<DVector<T>>,
    snap_storage: StorageCounter,
    basis_storage: StorageCounter,
}

impl<T: Real> VectorAccumulator<T> {
    fn new() -> Self {
        VectorAccumulator {
            q: Vec::new(),
            snaps: Vec::new(),
            snap_storage: StorageCounter::new(),
            basis_storage: StorageCounter::new(),
        }
    }

    fn residual(&self, x: &DVector<T>) -> DVector<T> {
        let mut r = x.clone();
        for _ in 0..2 {
            for q in &self.q {
                let c = q.dot(&r);
                r.axpy(-c, q, T::one());
            }
        }
        r
    }

    fn error(&self, x: &DVector<T>) -> T {
        let d = x.norm();
        if d == T::zero() {
            T::zero()
        } else {
            self.residual(x).norm() / d
        }
    }

    fn include(&mut self, x: DVector<T>) {
        let r = self.residual(&x);
        let (rn, xn) = (r.norm(), x.norm());
        self.snap_storage.alloc(x.len());
        if xn > T::zero() && rn > T::lit(1e-12) * xn {
            self.basis_storage.alloc(r.len());
            self.q.push(r / rn);
        }
        self.snaps.push(x);
    }

    fn peaks(&self) -> (usize, usize) {
        (self.snap_storage.peak(), self.basis_storage.peak())
    }

    fn finish(&self, tau: f64, n_max: usize, tol: &Tolerances) -> Result<(DMatrix<T>, Vec<T>)> {
        if self.q.is_empty() {
            return Err(Error::Rank("all vectorized snapshots are zero".into()));
        }
        let q = DMatrix::from_columns(&self.q);
        let s = DMatrix::from_columns(&self.snaps);
        let r = q.tr_mul(&s);
        let (u, sv) = truncated_range(&r, tau, n_max, tol)?;
        Ok((q * u, sv))
    }
}

/// Adaptive vector POD over the same phases as [`dynamic_2s_pod`], with the
/// one-sided criterion `‖ξ − V Vᵀξ‖/‖ξ‖ > tol`.
pub fn vector_pod<T: Real, S: SnapshotSource<T> + ?Sized>(source: &mut S, opts: &VectorPodOptions) -> Result<VectorPod<T>> {
    check_tau(opts.tau)?;
    let shape = source.shape();
    check_memory_guard(shape, opts.override_guard)?;
    let n_max = effective_n_max(opts.n_max)?;
    let sets = phase_sets(n_max)?;
    let times = candidate_times(source.t_final(), n_max);
    let tol = T::lit(opts.tol);
    let mut fetch = |i: usize| -> Result<DVector<T>> {
        let m = source.snapshot(times[i]).map_err(|e| stream_err(times[i].as_f64(), e))?;
        Ok(DVector::from_column_slice(m.as_slice()))
    };
    let mut acc = VectorAccumulator::new();
    acc.include(fetch(0)?);
    let mut included = vec![times[0]];
    let (mut evaluated, mut errors, mut means) = (Vec::new(), Vec::new(), Vec::new());
    let mut phases_used = 0;
    for set in &sets {
        phases_used += 1;
        let (mut sum, mut count) = (T::zero(), 0usize);
        for &i in set.iter().filter(|&&i| i != 0) {
            let x = fetch(i)?;
            let eps = if acc.q.is_empty() {
                if x.norm() == T::zero() {
                    T::zero()
                } else {
                    T::one()
                }
            } else {
                acc.error(&x)
            };
            evaluated.push(times[i]);
            errors.push(eps);
            count += 1;
            if eps > tol {
                acc.include(x.clone());
                included.push(times[i]);
                sum += acc.error(&x);
            } else {
                sum += eps;
            }
        }
        let mean = if count == 0 { T::zero() } else { sum / T::from_count(count) };
        means.push(mean);
        if mean <= tol {
            break;
        }
    }
    let (basis, singvals) = acc.finish(opts.tau, n_max, &Tolerances::default())?;
    Ok(VectorPod {
        basis,
        singvals,
        report: SelectionReport {
            phases_used,
            included_times: included,
            evaluated_times: evaluated,
            per_time_error: errors,
            phase_mean_errors: means,
            peak_storage_entries: acc.peaks().0 + acc.peaks().1,
        },
        snapshot_shape: shape,
        snapshot_entries: acc.peaks().0,
        basis_entries: acc.peaks().1,
    })
}

/// Vector POD of every listed snapshot (no adaptive selection).
pub fn vector_pod_fixed<T: Real, S: SnapshotSource<T> + ?Sized>(
    source: &mut S,
    times: &[T],
    tau: f64,
    override_guard: bool,
) -> Result<VectorPod<T>> {
    check_tau(tau)?;
    let shape = source.shape();
    check_memory_guard(shape, override_guard)?;
    let mut acc = VectorAccumulator::new();
    for &t in times {
        let m = source.snapshot(t).map_err(|e| stream_err(t.as_f64(), e))?;
        acc.include(DVector::from_column_slice(m.as_slice()));
    }
    let (basis, singvals) = acc.finish(tau, times.len(), &Tolerances::default())?;
    Ok(VectorPod {
        basis,
        singvals,
        report: SelectionReport {
            phases_used: 0,
            included_times: times.to_vec(),
            evaluated_times: Vec::new(),
            per_time_error: Vec::new(),
            phase_mean_errors: Vec::new(),
            peak_storage_entries: acc.peaks().0 + acc.peaks().1,
        },
        snapshot_shape: shape,
        snapshot_entries: acc.peaks().0,
        basis_entries: acc.peaks().1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::full::StoredSource;
    use crate::full::{SnapshotKind, SnapshotStream};
    use crate::linalg::orthonormality_defect;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    #[test]
    fn accumulate_by_hand() {
        let mut s = AccumulatorState::new(2).unwrap();
        s.accumulate(&diag(&[3.0, 2.0, 1.0, 0.0])).unwrap();
        assert_eq!(s.st, vec![3.0, 2.0]);
        assert_eq!(s.sigma_discard_max, 1.0);
        s.accumulate(&diag(&[5.0, 0.5, 0.0, 0.0])).unwrap();
        assert_eq!(s.st, vec![5.0, 3.0]);
        assert_eq!(s.sigma_discard_max, 2.0);
        assert_eq!(s.origins, vec![1, 0]);
    }

    #[test]
    fn shape_change_is_stream_error() {
        let mut s = AccumulatorState::new(2).unwrap();
        s.accumulate(&diag(&[1.0, 1.0, 1.0])).unwrap();
        assert!(matches!(s.accumulate(&diag(&[1.0, 1.0])), Err(Error::Stream { .. })));
    }

    #[test]
    fn zero_snapshot_contributes_nothing() {
        let mut s = AccumulatorState::<f64>::new(3).unwrap();
        s.accumulate(&DMatrix::zeros(4, 4)).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.count_processed, 1);
    }

    #[test]
    fn inclusion_error_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = AccumulatorState::new(3).unwrap();
        let a = DMatrix::from_fn(10, 3, |_, _| rng.random::<f64>() - 0.5);
        let b = DMatrix::from_fn(10, 3, |_, _| rng.random::<f64>() - 0.5);
        s.accumulate(&(&a * b.transpose())).unwrap();
        let c = DMatrix::from_fn(3, 3, |_, _| rng.random::<f64>());
        let inside = &s.vt * c * s.wh.transpose();
        assert!(inclusion_error(&inside, &s).unwrap() < 1e-10);

        let mut e1 = AccumulatorState::new(1).unwrap();
        let mut m = DMatrix::<f64>::zeros(4, 4);
        m[(0, 0)] = 1.0;
        e1.accumulate(&m).unwrap();
        let mut x = DMatrix::<f64>::zeros(4, 4);
        x[(1, 1)] = 1.0;
        assert!((inclusion_error(&x, &e1).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(inclusion_error(&DMatrix::zeros(4, 4), &e1).unwrap(), 0.0);
    }

    #[test]
    fn truncation_rank_rule() {
        assert_eq!(truncation_rank(&[1.0f64, 1e-3, 1e-6], 1e-2, 1), 1);
        assert_eq!(truncation_rank(&[1.0f64, 1e-1, 1e-6], 1e-2, 1), 2);
        assert_eq!(truncation_rank(&[1.0f64, 1.0, 1.0], 0.9, 1), 1);
        assert_eq!(truncation_rank(&[1.0f64, 1.0, 1.0], 0.5, 1), 3);
        assert_eq!(truncation_rank(&[2.0f64], 0.5, 4), 1);
    }

    #[test]
    fn rank_one_snapshot_prunes_to_single_vectors() {
        let v = DVector::from_fn(6, |i, _| (i as f64 + 1.0).sqrt());
        let w = DVector::from_fn(5, |i, _| 1.0 - i as f64 * 0.3);
        let mut s = AccumulatorState::new(4).unwrap();
        s.accumulate(&(&v * w.transpose())).unwrap();
        let bp = prune(&s, 1e-3, 10).unwrap();
        assert_eq!((bp.nu_l(), bp.nu_r()), (1, 1));
        let vn = v.normalize();
        let wn = w.normalize();
        assert!((bp.vl.column(0).dot(&vn).abs() - 1.0).abs() < 1e-12);
        assert!((bp.wr.column(0).dot(&wn).abs() - 1.0).abs() < 1e-12);
    }

    fn constant_source(m: DMatrix<f64>, t_final: f64, n: usize) -> StoredSource<f64> {
        let mut st = SnapshotStream::new(SnapshotKind::State);
        for t in candidate_times(t_final, n) {
            st.push(t, m.clone()).unwrap();
        }
        StoredSource::new(st, t_final).unwrap()
    }

    #[test]
    fn constant_stream_stops_after_one_phase() {
        let m = DMatrix::from_fn(8, 8, |i, j| ((i + 2 * j) as f64).sin());
        let mut src = constant_source(m, 1.0, 16);
        let opts = PodOptions { n_max: 16, kappa: 8, ..PodOptions::default() };
        let out = dynamic_2s_pod(&mut src, &opts).unwrap();
        assert_eq!(out.report.phases_used, 1);
        assert_eq!(out.report.n_s(), 1);
        assert!(out.report.per_time_error.iter().all(|&e| e < 1e-12));
    }

    #[test]
    fn rank_one_stream_gives_one_dimensional_spaces() {
        let v = DVector::from_fn(7, |i, _| (i as f64).cos());
        let w = DVector::from_fn(7, |i, _| (i as f64 * 0.5).sin() + 0.1);
        let n = 12;
        let mut st = SnapshotStream::new(SnapshotKind::State);
        for t in candidate_times(2.0, n) {
            st.push(t, &v * w.transpose() * (1.0 + t * t)).unwrap();
        }
        let mut src = StoredSource::new(st, 2.0).unwrap();
        let out = dynamic_2s_pod(&mut src, &PodOptions { n_max: n, kappa: 5, ..Default::default() }).unwrap();
        assert_eq!(out.report.n_s(), 1);
        assert_eq!((out.basis.nu_l(), out.basis.nu_r()), (1, 1));
    }

    #[test]
    fn zero_seed_is_replaced_by_next_candidate() {
        let mut st = SnapshotStream::new(SnapshotKind::State);
        for (k, t) in candidate_times(1.0, 8).into_iter().enumerate() {
            let m = if k == 0 { DMatrix::zeros(5, 5) } else { DMatrix::identity(5, 5) * t };
            st.push(t, m).unwrap();
        }
        let mut src = StoredSource::new(st, 1.0).unwrap();
        let out = dynamic_2s_pod(&mut src, &PodOptions { n_max: 8, kappa: 5, ..Default::default() }).unwrap();
        assert_eq!(out.report.n_s(), 2);
        assert_eq!(out.report.per_time_error[0], 1.0);
        assert_eq!(out.basis.nu_l(), 5);
    }

    #[test]
    fn phase_geometry() {
        let [a, b, c] = phase_sets(18).unwrap();
        assert_eq!(a, vec![0, 4, 8, 12]);
        assert_eq!(b, vec![2, 6, 10, 14]);
        assert_eq!(c, vec![1, 3, 5, 7, 9, 11, 13, 15]);
        assert!(phase_sets(3).is_err());
    }

    #[test]
    fn vanilla_rank_one_then_no_new_directions() {
        let v = DVector::from_fn(6, |i, _| i as f64 - 2.5);
        let w = DVector::from_fn(6, |i, _| (i * i) as f64);
        let x = &v * w.transpose();
        let (l, r) = vanilla_update(&DMatrix::zeros(6, 0), &DMatrix::zeros(6, 0), &x, 3).unwrap();
        assert_eq!((l.ncols(), r.ncols()), (1, 1));
        assert!((l.column(0).normalize().dot(&v.normalize()).abs() - 1.0).abs() < 1e-12);
        let (l2, _) = vanilla_update(&l, &r, &(x * 2.0), 3).unwrap();
        assert_eq!(l2.ncols(), 1);
    }

    #[test]
    fn vector_pod_trivial_cases() {
        let m = DMatrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64 + 1.0);
        let mut one = constant_source(m.clone(), 1.0, 4);
        let vp = vector_pod_fixed(&mut one, &[0.0], 1e-3, false).unwrap();
        assert_eq!(vp.k(), 1);
        let want = DVector::from_column_slice(m.as_slice()).normalize();
        assert!((vp.basis.column(0).dot(&want).abs() - 1.0).abs() < 1e-14);
        let mut st = SnapshotStream::new(SnapshotKind::State);
        st.push(0.0, m.clone()).unwrap();
        st.push(1.0, m * 3.0).unwrap();
        let mut two = StoredSource::new(st, 1.0).unwrap();
        assert_eq!(vector_pod_fixed(&mut two, &[0.0, 1.0], 1e-3, false).unwrap().k(), 1);
        assert!(orthonormality_defect(&vp.basis) < 1e-14);
    }

    #[test]
    fn memory_guard() {
        assert!(matches!(check_memory_guard((600, 600), false), Err(Error::MemoryGuard(_))));
        assert!(check_memory_guard((600, 600), true).is_ok());
        assert!(check_memory_guard((512, 512), false).is_ok());
    }
}
