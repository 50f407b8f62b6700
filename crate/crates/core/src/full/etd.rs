use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{
    expm_pade, general_eig_with, phi1, phi1_complex, sym_eig_with, Eigen, SylvesterSolver, Tolerances,
};
use crate::scalar::Real;

#[derive(Debug, Clone)]
enum Kind<T: Real> {
    /// Orthogonal eigenbases of symmetric `A`, `B`.
    Real {
        xa: DMatrix<T>,
        xb: DMatrix<T>,
        decay: DMatrix<T>,
        forcing: DMatrix<T>,
    },
    Complex {
        xa: DMatrix<Complex<T>>,
        xa_inv: DMatrix<Complex<T>>,
        xb: DMatrix<Complex<T>>,
        xb_inv: DMatrix<Complex<T>>,
        decay: DMatrix<Complex<T>>,
        forcing: DMatrix<Complex<T>>,
    },
    /// Ill-conditioned eigenbasis: dense exponentials and a Sylvester solve per step.
    Dense {
        ea: DMatrix<T>,
        eb: DMatrix<T>,
        sylvester: SylvesterSolver<T>,
    },
}

/// Exponential Euler for `U̇ = AU + UB + F` with a fixed step `h`:
///
/// `U⁺ = e^{hA} U e^{hB} + Φ`, where `AΦ + ΦB = e^{hA} F e^{hB} − F`.
///
/// In the eigenbases of `A` and `B` this is the entrywise update
/// `Û⁺ = e^{h(aᵢ+bⱼ)}·Û + h·φ₁(h(aᵢ+bⱼ))·F̂`, which stays finite when
/// `aᵢ + bⱼ = 0`.
#[derive(Debug, Clone)]
pub struct EtdPropagator<T: Real> {
    h: T,
    kind: Kind<T>,
}

fn complex_basis<T: Real>(eig: &Eigen<T>) -> (DMatrix<Complex<T>>, DMatrix<Complex<T>>) {
    let c = |x: T| Complex::new(x, T::zero());
    match eig {
        Eigen::Symmetric { vectors, .. } => (vectors.map(c), vectors.transpose().map(c)),
        Eigen::General { vectors, inverse, .. } => (vectors.clone(), inverse.clone()),
    }
}

impl<T: Real> EtdPropagator<T> {
    /// Decomposes `A` and `B`; falls back to the dense path when an eigenbasis
    /// is too ill-conditioned.
    pub fn new(a: &DMatrix<T>, b: &DMatrix<T>, h: T, tol: &Tolerances) -> Result<Self> {
        let decompose = |m: &DMatrix<T>| {
            if crate::linalg::is_symmetric(m, tol.symmetry) {
                sym_eig_with(m, tol)
            } else {
                general_eig_with(m, tol)
            }
        };
        match (decompose(a), decompose(b)) {
            (Ok(ea), Ok(eb)) => Ok(Self::from_eigen(&ea, &eb, h)),
            (Err(Error::Conditioning(_)), _) | (_, Err(Error::Conditioning(_))) => Self::dense(a, b, h, tol),
            (Err(e), _) | (_, Err(e)) => Err(e),
        }
    }

    /// Builds the propagator from precomputed eigendecompositions.
    pub fn from_eigen(eig_a: &Eigen<T>, eig_b: &Eigen<T>, h: T) -> Self {
        if let (Eigen::Symmetric { vectors: xa, values: la }, Eigen::Symmetric { vectors: xb, values: lb }) =
            (eig_a, eig_b)
        {
            let z = |i: usize, j: usize| h * (la[i] + lb[j]);
            let decay = DMatrix::from_fn(la.len(), lb.len(), |i, j| z(i, j).exp());
            let forcing = DMatrix::from_fn(la.len(), lb.len(), |i, j| h * phi1(z(i, j)));
            return EtdPropagator { h, kind: Kind::Real { xa: xa.clone(), xb: xb.clone(), decay, forcing } };
        }
        let (la, lb) = (eig_a.values_complex(), eig_b.values_complex());
        let (xa, xa_inv) = complex_basis(eig_a);
        let (xb, xb_inv) = complex_basis(eig_b);
        let hc = Complex::new(h, T::zero());
        let z = |i: usize, j: usize| (la[i] + lb[j]) * hc;
        let decay = DMatrix::from_fn(la.len(), lb.len(), |i, j| {
            let w = z(i, j);
            let r = w.re.exp();
            Complex::new(r * w.im.cos(), r * w.im.sin())
        });
        let forcing = DMatrix::from_fn(la.len(), lb.len(), |i, j| phi1_complex(z(i, j)) * hc);
        EtdPropagator { h, kind: Kind::Complex { xa, xa_inv, xb, xb_inv, decay, forcing } }
    }

    /// Dense path: Padé exponentials plus a Bartels-Stewart solve per step.
    pub fn dense(a: &DMatrix<T>, b: &DMatrix<T>, h: T, tol: &Tolerances) -> Result<Self> {
        let ea = expm_pade(&(a * h))?;
        let eb = expm_pade(&(b * h))?;
        let sylvester = SylvesterSolver::with_tolerances(a, b, tol)?;
        Ok(EtdPropagator { h, kind: Kind::Dense { ea, eb, sylvester } })
    }

    pub fn step_size(&self) -> T {
        self.h
    }

    /// True when the eigenbasis shortcut could not be used.
    pub fn is_dense(&self) -> bool {
        matches!(self.kind, Kind::Dense { .. })
    }

    /// One step from `u` with frozen nonlinearity `f`.
    pub fn step(&self, u: &DMatrix<T>, f: &DMatrix<T>) -> Result<DMatrix<T>> {
        match &self.kind {
            Kind::Real { xa, xb, decay, forcing } => {
                check(u, f, decay.shape())?;
                let uh = xa.tr_mul(u) * xb;
                let fh = xa.tr_mul(f) * xb;
                let next = uh.component_mul(decay) + fh.component_mul(forcing);
                Ok(xa * next * xb.transpose())
            }
            Kind::Complex { xa, xa_inv, xb, xb_inv, decay, forcing } => {
                check(u, f, decay.shape())?;
                let c = |x: T| Complex::new(x, T::zero());
                let uh = xa_inv * u.map(c) * xb;
                let fh = xa_inv * f.map(c) * xb;
                let next = uh.component_mul(decay) + fh.component_mul(forcing);
                Ok((xa * next * xb_inv).map(|z| z.re))
            }
            Kind::Dense { ea, eb, sylvester } => {
                check(u, f, (ea.nrows(), eb.nrows()))?;
                let rhs = ea * f * eb - f;
                let phi = sylvester.solve(&rhs)?;
                Ok(ea * u * eb + phi)
            }
        }
    }
}

fn check<T: Real>(u: &DMatrix<T>, f: &DMatrix<T>, shape: (usize, usize)) -> Result<()> {
    if u.shape() != shape || f.shape() != shape {
        return Err(Error::dim(format!(
            "ETD step on a {}x{} problem given state {}x{} and forcing {}x{}",
            shape.0,
            shape.1,
            u.nrows(),
            u.ncols(),
            f.nrows(),
            f.ncols()
        )));
    }
    Ok(())
}
