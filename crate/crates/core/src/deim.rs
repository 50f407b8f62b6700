//! Two-sided discrete empirical interpolation.
//!
//! `F ≈ V_F (P_ℓᵀV_F)⁻¹ (P_ℓᵀ F P_r) (W_FᵀP_r)⁻¹ W_Fᵀ`, with the row and
//! column index sets chosen by pivoted QR (q-deim). Selection matrices are
//! never formed; every product with them is an index gather.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{pivoted_qr_indices_with, select_block, select_rows, Lu, Tolerances};
use crate::pod::{check_memory_guard, BasisPair};
use crate::problems::ProblemSpec;
use crate::scalar::Real;

const LU_TOL: f64 = 1e-14;

/// Index sets, factored interpolation matrices and amplification constants.
#[derive(Debug, Clone, PartialEq)]
pub struct DeimOperator<T: Real> {
    pub row_idx: Vec<usize>,
    pub col_idx: Vec<usize>,
    /// `P_ℓᵀ V_F`.
    pub lu_l: Lu<T>,
    /// `W_Fᵀ P_r`.
    pub lu_r: Lu<T>,
    /// `‖(P_ℓᵀV_F)⁻¹‖₂`.
    pub c_l: T,
    /// `‖(W_FᵀP_r)⁻¹‖₂`.
    pub c_r: T,
}

/// `1/σ_min(m)`.
fn inverse_norm<T: Real>(m: &DMatrix<T>) -> Result<T> {
    let s = crate::linalg::singular_values(m);
    let smin = s.iter().copied().fold(T::max_value().unwrap_or_else(T::one), |a, b| a.min(b));
    if smin <= T::zero() || !smin.is_finite() {
        return Err(Error::DegenerateSelection("interpolation matrix is singular".into()));
    }
    Ok(T::one() / smin)
}

impl<T: Real> DeimOperator<T> {
    pub fn p1(&self) -> usize {
        self.row_idx.len()
    }

    pub fn p2(&self) -> usize {
        self.col_idx.len()
    }

    /// `X (W_FᵀP_r)⁻¹`.
    fn right_solve(&self, x: &DMatrix<T>) -> DMatrix<T> {
        self.lu_r.solve_transpose(&x.transpose()).transpose()
    }

    /// Entries of `f` at the selected rows and columns.
    pub fn samples(&self, f: &DMatrix<T>) -> DMatrix<T> {
        select_block(f, &self.row_idx, &self.col_idx)
    }

    /// `c_ℓ·c_r`.
    pub fn amplification(&self) -> T {
        self.c_l * self.c_r
    }
}

/// Builds the operator with independent row and column index sets.
pub fn build_deim<T: Real>(fbasis: &BasisPair<T>) -> Result<DeimOperator<T>> {
    build_deim_with(fbasis, false, &Tolerances::default())
}

/// With `use_symmetry` set and a basis pair flagged symmetric, the row indices
/// are reused as column indices, so symmetric `F` gives symmetric `F̃`.
pub fn build_deim_with<T: Real>(fbasis: &BasisPair<T>, use_symmetry: bool, tol: &Tolerances) -> Result<DeimOperator<T>> {
    let (vf, wf) = (&fbasis.vl, &fbasis.wr);
    if vf.ncols() == 0 || wf.ncols() == 0 {
        return Err(Error::Rank("DEIM needs nonempty bases".into()));
    }
    let degenerate = |e: Error| match e {
        Error::Rank(m) | Error::Singular(m) => Error::DegenerateSelection(m),
        other => other,
    };
    let row_idx = pivoted_qr_indices_with(&vf.transpose(), tol).map_err(degenerate)?;
    let shared = use_symmetry && fbasis.symmetric && vf.shape() == wf.shape();
    let col_idx = if shared {
        row_idx.clone()
    } else {
        pivoted_qr_indices_with(&wf.transpose(), tol).map_err(degenerate)?
    };
    let pl = select_rows(vf, &row_idx);
    let pr = select_rows(wf, &col_idx).transpose();
    let lu_l = Lu::new(&pl, LU_TOL).map_err(degenerate)?;
    let lu_r = Lu::new(&pr, LU_TOL).map_err(degenerate)?;
    let c_l = inverse_norm(&pl)?;
    let c_r = inverse_norm(&pr)?;
    Ok(DeimOperator { row_idx, col_idx, lu_l, lu_r, c_l, c_r })
}

/// `F̃ = V_F (P_ℓᵀV_F)⁻¹ S (W_FᵀP_r)⁻¹ W_Fᵀ` from the `p₁ × p₂` samples `S`.
pub fn deim_approximate<T: Real>(op: &DeimOperator<T>, fbasis: &BasisPair<T>, samples: &DMatrix<T>) -> Result<DMatrix<T>> {
    if samples.shape() != (op.p1(), op.p2()) || fbasis.nu_l() != op.p1() || fbasis.nu_r() != op.p2() {
        return Err(Error::dim(format!(
            "samples are {}x{}, operator expects {}x{}",
            samples.nrows(),
            samples.ncols(),
            op.p1(),
            op.p2()
        )));
    }
    let c = op.right_solve(&op.lu_l.solve(samples));
    Ok(&fbasis.vl * c * fbasis.wr.transpose())
}

/// Both sides of `‖F − F̃‖_F ≤ c_ℓ c_r ‖F − V VᵀF W Wᵀ‖_F`.
pub fn deim_error_bound<T: Real>(op: &DeimOperator<T>, fbasis: &BasisPair<T>, f: &DMatrix<T>) -> Result<(T, T)> {
    let approx = deim_approximate(op, fbasis, &op.samples(f))?;
    let lhs = (f - approx).norm();
    let best = (f - fbasis.lift(&fbasis.project(f))).norm();
    Ok((lhs, op.amplification() * best))
}

/// The q-deim bound `√(n−p+1)·√(4^p + 6p − 1)/3` on one amplification constant.
pub fn qdeim_bound(n: usize, p: usize) -> f64 {
    let p_f = p as f64;
    ((n - p + 1) as f64).sqrt() * (4f64.powf(p_f) + 6.0 * p_f - 1.0).sqrt() / 3.0
}

/// The four time-independent products of the reduced nonlinearity.
#[derive(Debug, Clone, PartialEq)]
pub struct RomDeimFactors<T: Real> {
    /// `k₁ × p₁`: `V_Uᵀ V_F (P_ℓᵀV_F)⁻¹`
    pub ml: DMatrix<T>,
    /// `p₂ × k₂`: `(W_FᵀP_r)⁻¹ W_Fᵀ W_U`
    pub mr: DMatrix<T>,
    /// `p₁ × k₁`: `P_ℓᵀ V_U`
    pub sl: DMatrix<T>,
    /// `k₂ × p₂`: `W_Uᵀ P_r`
    pub sr: DMatrix<T>,
    pub row_idx: Vec<usize>,
    pub col_idx: Vec<usize>,
}

pub fn precompute_rom_factors<T: Real>(
    ubasis: &BasisPair<T>,
    fbasis: &BasisPair<T>,
    op: &DeimOperator<T>,
) -> Result<RomDeimFactors<T>> {
    if ubasis.vl.nrows() != fbasis.vl.nrows() || ubasis.wr.nrows() != fbasis.wr.nrows() {
        return Err(Error::dim("state and nonlinearity bases live on different grids"));
    }
    let vv = ubasis.vl.tr_mul(&fbasis.vl);
    let ml = op.lu_l.solve_transpose(&vv.transpose()).transpose();
    let mr = op.lu_r.solve(&fbasis.wr.tr_mul(&ubasis.wr));
    Ok(RomDeimFactors {
        ml,
        mr,
        sl: select_rows(&ubasis.vl, &op.row_idx),
        sr: select_rows(&ubasis.wr, &op.col_idx).transpose(),
        row_idx: op.row_idx.clone(),
        col_idx: op.col_idx.clone(),
    })
}

impl<T: Real> RomDeimFactors<T> {
    /// `(k₁, k₂)`.
    pub fn reduced_shape(&self) -> (usize, usize) {
        (self.ml.nrows(), self.mr.ncols())
    }

    /// Exact factors for identity bases of size `n₁ × n₂`: every entry is sampled.
    pub fn identity(n1: usize, n2: usize) -> Self {
        RomDeimFactors {
            ml: DMatrix::identity(n1, n1),
            mr: DMatrix::identity(n2, n2),
            sl: DMatrix::identity(n1, n1),
            sr: DMatrix::identity(n2, n2),
            row_idx: (0..n1).collect(),
            col_idx: (0..n2).collect(),
        }
    }
}

/// `M_ℓ · F(S_ℓ Y S_r, t) · M_r`, with `F` evaluated only at the selected entries.
pub fn reduced_nonlinear<T: Real>(factors: &RomDeimFactors<T>, spec: &ProblemSpec<T>, y: &DMatrix<T>, t: T) -> Result<DMatrix<T>> {
    let (k1, k2) = factors.reduced_shape();
    if y.shape() != (k1, k2) {
        return Err(Error::dim(format!("reduced state is {}x{}, model is {k1}x{k2}", y.nrows(), y.ncols())));
    }
    if spec.nonlinear.is_zero() {
        return Ok(DMatrix::zeros(k1, k2));
    }
    let z = &factors.sl * y * &factors.sr;
    let fz = spec.eval_nonlinear_at(&z, &factors.row_idx, &factors.col_idx, t)?;
    Ok(&factors.ml * fz * &factors.mr)
}

/// One-sided DEIM on vectorized snapshots, `f ≈ Φ (PᵀΦ)⁻¹ Pᵀf`.
#[derive(Debug, Clone)]
pub struct VectorDeim<T: Real> {
    pub basis: DMatrix<T>,
    pub idx: Vec<usize>,
    lu: Lu<T>,
    pub c: T,
}

impl<T: Real> VectorDeim<T> {
    /// `shape` is the matrix shape the vectors came from, for the memory guard.
    pub fn new(basis: &DMatrix<T>, shape: (usize, usize), override_guard: bool) -> Result<Self> {
        check_memory_guard(shape, override_guard)?;
        if basis.ncols() == 0 {
            return Err(Error::Rank("DEIM needs a nonempty basis".into()));
        }
        let idx = pivoted_qr_indices_with(&basis.transpose(), &Tolerances::default()).map_err(|e| match e {
            Error::Rank(m) => Error::DegenerateSelection(m),
            other => other,
        })?;
        let pt = select_rows(basis, &idx);
        let lu = Lu::new(&pt, LU_TOL).map_err(|e| Error::DegenerateSelection(e.to_string()))?;
        let c = inverse_norm(&pt)?;
        Ok(VectorDeim { basis: basis.clone(), idx, lu, c })
    }

    /// From the values at [`Self::idx`].
    pub fn approximate(&self, samples: &DVector<T>) -> Result<DVector<T>> {
        if samples.len() != self.idx.len() {
            return Err(Error::dim("sample count does not match the index set"));
        }
        let rhs = DMatrix::from_column_slice(samples.len(), 1, samples.as_slice());
        Ok(&self.basis * self.lu.solve(&rhs).column(0))
    }

    /// `Vᵀ Φ (PᵀΦ)⁻¹` for a basis `V` of the same length.
    pub fn left_factor(&self, v: &DMatrix<T>) -> DMatrix<T> {
        self.lu.solve_transpose(&self.basis.tr_mul(v)).transpose()
    }

    pub fn approximate_full(&self, f: &DVector<T>) -> Result<DVector<T>> {
        let s = DVector::from_iterator(self.idx.len(), self.idx.iter().map(|&i| f[i]));
        self.approximate(&s)
    }
}
