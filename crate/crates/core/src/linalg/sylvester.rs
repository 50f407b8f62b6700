use nalgebra::DMatrix;

use super::eig::{real_schur, schur_blocks, schur_eigenvalues};
use super::{ensure_finite, ensure_square, is_symmetric, sym_eig_with, Eigen, Tolerances};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone)]
enum Path<T: Real> {
    /// Both coefficients symmetric: orthogonal eigenbases and a Hadamard quotient.
    Eigen {
        qa: DMatrix<T>,
        qb: DMatrix<T>,
        /// `1 / (λ_i(A) + λ_j(B))`
        inv_gap: DMatrix<T>,
    },
    /// Bartels-Stewart on the real Schur forms.
    Schur {
        qa: DMatrix<T>,
        ta: DMatrix<T>,
        qb: DMatrix<T>,
        tb: DMatrix<T>,
    },
}

/// Factored operator `Φ ↦ AΦ + ΦB`, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct SylvesterSolver<T: Real> {
    path: Path<T>,
    rows: usize,
    cols: usize,
}

impl<T: Real> SylvesterSolver<T> {
    pub fn new(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<Self> {
        Self::with_tolerances(a, b, &Tolerances::default())
    }

    pub fn with_tolerances(a: &DMatrix<T>, b: &DMatrix<T>, tol: &Tolerances) -> Result<Self> {
        ensure_square(a, "Sylvester coefficient A")?;
        ensure_square(b, "Sylvester coefficient B")?;
        ensure_finite(a, "Sylvester coefficient A")?;
        ensure_finite(b, "Sylvester coefficient B")?;
        let floor = T::lit(tol.sylvester_gap) * (a.norm() + b.norm());
        let (rows, cols) = (a.nrows(), b.nrows());

        if is_symmetric(a, tol.symmetry) && is_symmetric(b, tol.symmetry) {
            let (Eigen::Symmetric { vectors: qa, values: la }, Eigen::Symmetric { vectors: qb, values: lb }) =
                (sym_eig_with(a, tol)?, sym_eig_with(b, tol)?)
            else {
                unreachable!("sym_eig returns the symmetric variant");
            };
            let mut inv_gap = DMatrix::zeros(rows, cols);
            for j in 0..cols {
                for i in 0..rows {
                    let g = la[i] + lb[j];
                    if g.abs() < floor || g == T::zero() {
                        return Err(overlap(g.abs()));
                    }
                    inv_gap[(i, j)] = T::one() / g;
                }
            }
            return Ok(SylvesterSolver { path: Path::Eigen { qa, qb, inv_gap }, rows, cols });
        }

        let (qa, ta) = real_schur(a)?;
        let (qb, tb) = real_schur(b)?;
        let ea = schur_eigenvalues(&ta);
        let eb = schur_eigenvalues(&tb);
        for x in &ea {
            for y in &eb {
                let g = (*x + *y).norm_sqr().sqrt();
                if g < floor || g == T::zero() {
                    return Err(overlap(g));
                }
            }
        }
        Ok(SylvesterSolver { path: Path::Schur { qa, ta, qb, tb }, rows, cols })
    }

    /// Whether the symmetric eigenbasis path is in use.
    pub fn is_symmetric_path(&self) -> bool {
        matches!(self.path, Path::Eigen { .. })
    }

    /// Solves `AΦ + ΦB = C`.
    pub fn solve(&self, c: &DMatrix<T>) -> Result<DMatrix<T>> {
        if c.shape() != (self.rows, self.cols) {
            return Err(Error::dim(format!(
                "Sylvester right-hand side is {}x{}, expected {}x{}",
                c.nrows(),
                c.ncols(),
                self.rows,
                self.cols
            )));
        }
        match &self.path {
            Path::Eigen { qa, qb, inv_gap } => {
                let ct = qa.tr_mul(c) * qb;
                let xt = ct.component_mul(inv_gap);
                Ok(qa * xt * qb.transpose())
            }
            Path::Schur { qa, ta, qb, tb } => {
                let ct = qa.tr_mul(c) * qb;
                let xt = quasi_triangular_solve(ta, tb, ct)?;
                Ok(qa * xt * qb.transpose())
            }
        }
    }
}

fn overlap<T: Real>(gap: T) -> Error {
    Error::Singular(format!(
        "spectra of A and -B overlap (min |λ(A) + λ(B)| = {gap:e})"
    ))
}

/// Solves `Ta·X + X·Tb = C` for quasi upper triangular `Ta`, `Tb`, overwriting `C`.
fn quasi_triangular_solve<T: Real>(ta: &DMatrix<T>, tb: &DMatrix<T>, mut c: DMatrix<T>) -> Result<DMatrix<T>> {
    let rb = schur_blocks(ta);
    let cb = schur_blocks(tb);
    let mut x = DMatrix::<T>::zeros(c.nrows(), c.ncols());
    for &(j0, q) in &cb {
        // Subtract contributions of already solved column blocks.
        if j0 > 0 {
            let coupling = tb.view((0, j0), (j0, q));
            let solved = x.columns(0, j0);
            let upd = solved * coupling;
            let mut target = c.columns_mut(j0, q);
            target -= upd;
        }
        for &(i0, p) in rb.iter().rev() {
            let rhs = c.view((i0, j0), (p, q)).clone_owned();
            let blk = small_sylvester(
                &ta.view((i0, i0), (p, p)).clone_owned(),
                &tb.view((j0, j0), (q, q)).clone_owned(),
                &rhs,
            )?;
            x.view_mut((i0, j0), (p, q)).copy_from(&blk);
            if i0 > 0 {
                let upd = ta.view((0, i0), (i0, p)) * &blk;
                let mut target = c.view_mut((0, j0), (i0, q));
                target -= upd;
            }
        }
    }
    Ok(x)
}

/// `A·X + X·B = C` for blocks of order at most 2, via the Kronecker system
/// `(I ⊗ A + Bᵀ ⊗ I)·vec(X) = vec(C)` and Gaussian elimination with partial pivoting.
fn small_sylvester<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, c: &DMatrix<T>) -> Result<DMatrix<T>> {
    let (p, q) = (a.nrows(), b.nrows());
    let n = p * q;
    let mut m = [[T::zero(); 5]; 4];
    for jq in 0..q {
        for ip in 0..p {
            let row = jq * p + ip;
            for kp in 0..p {
                m[row][jq * p + kp] += a[(ip, kp)];
            }
            for kq in 0..q {
                m[row][kq * p + ip] += b[(kq, jq)];
            }
            m[row][4] = c[(ip, jq)];
        }
    }
    let scale = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).fold(T::zero(), |acc, (i, j)| acc.max(m[i][j].abs()));
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&r, &s| m[r][k].abs().partial_cmp(&m[s][k].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(k);
        if m[piv][k].abs() <= T::eps() * scale || m[piv][k] == T::zero() {
            return Err(Error::Singular("Sylvester diagonal block is singular".into()));
        }
        m.swap(k, piv);
        for r in (k + 1)..n {
            let f = m[r][k] / m[k][k];
            if f != T::zero() {
                for col in k..n {
                    let v = m[k][col];
                    m[r][col] -= f * v;
                }
                let v = m[k][4];
                m[r][4] -= f * v;
            }
        }
    }
    let mut sol = [T::zero(); 4];
    for k in (0..n).rev() {
        let mut s = m[k][4];
        for col in (k + 1)..n {
            s -= m[k][col] * sol[col];
        }
        sol[k] = s / m[k][k];
    }
    Ok(DMatrix::from_fn(p, q, |i, j| sol[j * p + i]))
}

/// Solves `AΦ + ΦB = C` with default tolerances.
pub fn solve_sylvester<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, c: &DMatrix<T>) -> Result<DMatrix<T>> {
    solve_sylvester_with(a, b, c, &Tolerances::default())
}

pub fn solve_sylvester_with<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    tol: &Tolerances,
) -> Result<DMatrix<T>> {
    ensure_finite(c, "Sylvester right-hand side")?;
    SylvesterSolver::with_tolerances(a, b, tol)?.solve(c)
}
