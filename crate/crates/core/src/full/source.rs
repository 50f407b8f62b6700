use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::{ensure_bounded, Scheme, SnapshotKind, SnapshotStream, Stepper, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::Tolerances;
use crate::problems::{AnalyticFunction, ProblemSpec};
use crate::scalar::Real;

/// Anything that can produce the snapshot `Ξ(t)` on demand.
pub trait SnapshotSource<T: Real> {
    /// Shape of every snapshot.
    fn shape(&self) -> (usize, usize);
    fn t_final(&self) -> T;
    fn snapshot(&mut self, t: T) -> Result<DMatrix<T>>;
}

/// `n_max` equispaced candidate times `tᵢ = i·T_f/(n_max − 1)` over `[0, T_f]`.
pub fn candidate_times<T: Real>(t_final: T, n_max: usize) -> Vec<T> {
    match n_max {
        0 => Vec::new(),
        1 => vec![T::zero()],
        _ => (0..n_max)
            .map(|i| {
                if i + 1 == n_max {
                    t_final
                } else {
                    T::from_count(i) * t_final / T::from_count(n_max - 1)
                }
            })
            .collect(),
    }
}

impl<T: Real> SnapshotSource<T> for AnalyticFunction<T> {
    fn shape(&self) -> (usize, usize) {
        (self.n, self.n)
    }

    fn t_final(&self) -> T {
        AnalyticFunction::t_final(self)
    }

    fn snapshot(&mut self, t: T) -> Result<DMatrix<T>> {
        self.sample(t)
    }
}

/// A precomputed stream, looked up by time stamp.
#[derive(Debug, Clone)]
pub struct StoredSource<T: Real> {
    pub stream: SnapshotStream<T>,
    pub t_final: T,
}

impl<T: Real> StoredSource<T> {
    pub fn new(stream: SnapshotStream<T>, t_final: T) -> Result<Self> {
        if stream.is_empty() {
            return Err(Error::dim("empty snapshot stream"));
        }
        Ok(StoredSource { stream, t_final })
    }
}

impl<T: Real> SnapshotSource<T> for StoredSource<T> {
    fn shape(&self) -> (usize, usize) {
        self.stream.shape().unwrap_or((0, 0))
    }

    fn t_final(&self) -> T {
        self.t_final
    }

    fn snapshot(&mut self, t: T) -> Result<DMatrix<T>> {
        let slack = T::lit(1e-9) * self.t_final.abs().max(T::one());
        self.stream
            .times
            .iter()
            .position(|&s| (s - t).abs() <= slack)
            .map(|k| self.stream.matrices[k].clone())
            .ok_or_else(|| Error::Domain(format!("no stored snapshot at t = {t}")))
    }
}

/// Snapshots of the full-order trajectory, integrated lazily.
///
/// The candidate interval `T_f/(n_max − 1)` is split into
/// `m = ⌈n_t/(n_max − 1)⌉` substeps. States at candidate times are cached as
/// checkpoints, so out-of-order requests only integrate from the nearest
/// earlier checkpoint. The same sampler serves the state and the nonlinearity
/// streams (see [`TrajectorySampler::set_kind`]).
#[derive(Debug, Clone)]
pub struct TrajectorySampler<T: Real> {
    spec: ProblemSpec<T>,
    grid: TimeGrid<T>,
    stepper: Option<Stepper<T>>,
    substeps: usize,
    kind: SnapshotKind,
    cache: BTreeMap<usize, DMatrix<T>>,
    steps_taken: usize,
}

impl<T: Real> TrajectorySampler<T> {
    pub fn new(spec: &ProblemSpec<T>, n_max: usize, n_t: usize, scheme: Scheme, tol: &Tolerances) -> Result<Self> {
        if n_max < 2 {
            return Err(Error::Config(format!("need at least two candidate times, got n_max = {n_max}")));
        }
        let intervals = n_max - 1;
        let substeps = n_t.div_ceil(intervals).max(1);
        let grid = TimeGrid::new(spec.t_final, substeps * intervals)?;
        let stepper = if spec.t_final > T::zero() {
            Some(Stepper::new(spec, scheme, grid.h(), tol)?)
        } else {
            None
        };
        let mut cache = BTreeMap::new();
        cache.insert(0, spec.u0.clone());
        Ok(TrajectorySampler {
            spec: spec.clone(),
            grid,
            stepper,
            substeps,
            kind: SnapshotKind::State,
            cache,
            steps_taken: 0,
        })
    }

    /// Which matrix [`SnapshotSource::snapshot`] returns: `U(t)` or `F(U(t), t)`.
    pub fn set_kind(&mut self, kind: SnapshotKind) {
        self.kind = kind;
    }

    /// Integration grid shared by all requests.
    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// Total number of time steps integrated so far.
    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn spec(&self) -> &ProblemSpec<T> {
        &self.spec
    }

    fn node_of(&self, t: T) -> Result<usize> {
        let h = self.grid.h();
        if h == T::zero() {
            return Ok(0);
        }
        let k = (t / h).round().to_usize().unwrap_or(usize::MAX);
        if k > self.grid.n_t || (self.grid.node(k) - t).abs() > T::lit(1e-8) * h {
            return Err(Error::Domain(format!("t = {t} is not on the snapshot grid")));
        }
        Ok(k)
    }

    /// State at integration node `k`.
    pub fn state_at_node(&mut self, k: usize) -> Result<DMatrix<T>> {
        if let Some(u) = self.cache.get(&k) {
            return Ok(u.clone());
        }
        let (&start, u) = self.cache.range(..k).next_back().expect("initial state is cached");
        let mut u = u.clone();
        let stepper = self.stepper.as_ref().expect("positive horizon");
        for i in start..k {
            let t = self.grid.node(i);
            u = stepper.step(&self.spec, &u, t)?;
            ensure_bounded(&u, i + 1)?;
            self.steps_taken += 1;
            if (i + 1) % self.substeps == 0 && i + 1 < k {
                self.cache.insert(i + 1, u.clone());
            }
        }
        self.cache.insert(k, u.clone());
        Ok(u)
    }
}

impl<T: Real> SnapshotSource<T> for TrajectorySampler<T> {
    fn shape(&self) -> (usize, usize) {
        self.spec.shape()
    }

    fn t_final(&self) -> T {
        self.spec.t_final
    }

    fn snapshot(&mut self, t: T) -> Result<DMatrix<T>> {
        let k = self.node_of(t)?;
        let u = self.state_at_node(k)?;
        match self.kind {
            SnapshotKind::Nonlinearity => self.spec.eval_nonlinear(&u, self.grid.node(k)),
            _ => Ok(u),
        }
    }
}
