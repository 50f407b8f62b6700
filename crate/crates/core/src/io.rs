//! Binary artifact formats.
//!
//! Snapshot streams (`MOR2SNAP`):
//!
//! ```text
//! "MOR2SNAP" | version u16 | kind u8 | rows u32 | cols u32 | count u32
//! count × ( time f64 | rows·cols f64, column-major )
//! ```
//!
//! Basis pairs (`MOR2BAS`):
//!
//! ```text
//! "MOR2BAS" | version u16
//! V_ℓ: rows u32 | cols u32 | data f64…      W_r: likewise
//! σ_ℓ: cols(V_ℓ) f64 | σ_r: cols(W_r) f64 | τ f64 | κ u32 | n_max u32
//! symmetric u8 | has_deim u8
//! [ p₁ u32 | p₂ u32 | rows p₁×u32 | cols p₂×u32 | P_ℓᵀV_ℓ p₁² f64 | W_rᵀP_r p₂² f64 ]
//! ```
//!
//! Everything is little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::deim::DeimOperator;
use crate::error::{Error, Result};
use crate::full::{SnapshotKind, SnapshotStream};
use crate::linalg::Lu;
use crate::pod::BasisPair;
use crate::scalar::Real;

pub const SNAP_MAGIC: &[u8; 8] = b"MOR2SNAP";
pub const BASIS_MAGIC: &[u8; 7] = b"MOR2BAS";
pub const FORMAT_VERSION: u16 = 1;

fn put_u8(w: &mut impl Write, v: u8) -> Result<()> {
    Ok(w.write_all(&[v])?)
}

fn put_u16(w: &mut impl Write, v: u16) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_matrix_data<T: Real>(w: &mut impl Write, m: &DMatrix<T>) -> Result<()> {
    m.iter().try_for_each(|x| put_f64(w, x.as_f64()))
}

fn put_matrix<T: Real>(w: &mut impl Write, m: &DMatrix<T>) -> Result<()> {
    put_u32(w, m.nrows())?;
    put_u32(w, m.ncols())?;
    put_matrix_data(w, m)
}

fn fill(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated file while reading {what}")),
        _ => Error::Io(e),
    })
}

fn get_u8(r: &mut impl Read, what: &str) -> Result<u8> {
    let mut b = [0u8; 1];
    fill(r, &mut b, what)?;
    Ok(b[0])
}

fn get_u16(r: &mut impl Read, what: &str) -> Result<u16> {
    let mut b = [0u8; 2];
    fill(r, &mut b, what)?;
    Ok(u16::from_le_bytes(b))
}

fn get_u32(r: &mut impl Read, what: &str) -> Result<usize> {
    let mut b = [0u8; 4];
    fill(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_f64(r: &mut impl Read, what: &str) -> Result<f64> {
    let mut b = [0u8; 8];
    fill(r, &mut b, what)?;
    Ok(f64::from_le_bytes(b))
}

fn get_matrix_data<T: Real>(r: &mut impl Read, rows: usize, cols: usize, what: &str) -> Result<DMatrix<T>> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(T::lit(get_f64(r, what)?));
    }
    Ok(DMatrix::from_vec(rows, cols, data))
}

fn get_matrix<T: Real>(r: &mut impl Read, what: &str) -> Result<DMatrix<T>> {
    let rows = get_u32(r, what)?;
    let cols = get_u32(r, what)?;
    get_matrix_data(r, rows, cols, what)
}

fn expect_magic(r: &mut impl Read, magic: &[u8]) -> Result<()> {
    let mut b = vec![0u8; magic.len()];
    fill(r, &mut b, "magic bytes")?;
    if b != magic {
        return Err(Error::Format(format!("expected magic {:?}", String::from_utf8_lossy(magic))));
    }
    let v = get_u16(r, "version")?;
    if v != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {v}")));
    }
    Ok(())
}

fn expect_end(r: &mut impl Read) -> Result<()> {
    let mut b = [0u8; 1];
    match r.read(&mut b)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes after the last record".into())),
    }
}

pub fn write_snapshots<T: Real>(w: &mut impl Write, stream: &SnapshotStream<T>) -> Result<()> {
    let (rows, cols) = stream.shape().unwrap_or((0, 0));
    w.write_all(SNAP_MAGIC)?;
    put_u16(w, FORMAT_VERSION)?;
    put_u8(w, stream.kind.code())?;
    put_u32(w, rows)?;
    put_u32(w, cols)?;
    put_u32(w, stream.len())?;
    for (t, m) in stream.times.iter().zip(&stream.matrices) {
        put_f64(w, t.as_f64())?;
        put_matrix_data(w, m)?;
    }
    Ok(())
}

pub fn read_snapshots<T: Real>(r: &mut impl Read) -> Result<SnapshotStream<T>> {
    expect_magic(r, SNAP_MAGIC)?;
    let kind = SnapshotKind::from_code(get_u8(r, "kind")?)?;
    let rows = get_u32(r, "rows")?;
    let cols = get_u32(r, "cols")?;
    let count = get_u32(r, "count")?;
    let mut stream = SnapshotStream::new(kind);
    for k in 0..count {
        let what = format!("snapshot {k}");
        let t = T::lit(get_f64(r, &what)?);
        stream.push(t, get_matrix_data(r, rows, cols, &what)?)?;
    }
    expect_end(r)?;
    Ok(stream)
}

pub fn write_basis<T: Real>(w: &mut impl Write, basis: &BasisPair<T>, deim: Option<&DeimOperator<T>>) -> Result<()> {
    w.write_all(BASIS_MAGIC)?;
    put_u16(w, FORMAT_VERSION)?;
    put_matrix(w, &basis.vl)?;
    put_matrix(w, &basis.wr)?;
    for s in basis.singvals_l.iter().chain(&basis.singvals_r) {
        put_f64(w, s.as_f64())?;
    }
    put_f64(w, basis.tau)?;
    put_u32(w, basis.kappa)?;
    put_u32(w, basis.n_max)?;
    put_u8(w, basis.symmetric as u8)?;
    match deim {
        None => put_u8(w, 0),
        Some(op) => {
            put_u8(w, 1)?;
            put_u32(w, op.p1())?;
            put_u32(w, op.p2())?;
            for &i in op.row_idx.iter().chain(&op.col_idx) {
                put_u32(w, i)?;
            }
            put_matrix_data(w, &crate::linalg::select_rows(&basis.vl, &op.row_idx))?;
            put_matrix_data(w, &crate::linalg::select_rows(&basis.wr, &op.col_idx).transpose())
        }
    }
}

fn inverse_norm<T: Real>(m: &DMatrix<T>) -> T {
    let smin = crate::linalg::singular_values(m).iter().copied().fold(T::max_value().unwrap_or_else(T::one), |a, b| a.min(b));
    T::one() / smin
}

pub fn read_basis<T: Real>(r: &mut impl Read) -> Result<(BasisPair<T>, Option<DeimOperator<T>>)> {
    expect_magic(r, BASIS_MAGIC)?;
    let vl = get_matrix::<T>(r, "left basis")?;
    let wr = get_matrix::<T>(r, "right basis")?;
    let mut singvals_l = Vec::with_capacity(vl.ncols());
    for _ in 0..vl.ncols() {
        singvals_l.push(T::lit(get_f64(r, "singular values")?));
    }
    let mut singvals_r = Vec::with_capacity(wr.ncols());
    for _ in 0..wr.ncols() {
        singvals_r.push(T::lit(get_f64(r, "singular values")?));
    }
    let tau = get_f64(r, "tau")?;
    let kappa = get_u32(r, "kappa")?;
    let n_max = get_u32(r, "n_max")?;
    let symmetric = get_u8(r, "symmetric flag")? != 0;
    let basis = BasisPair { vl, wr, singvals_l, singvals_r, tau, kappa, n_max, symmetric };
    let deim = match get_u8(r, "DEIM marker")? {
        0 => None,
        1 => {
            let p1 = get_u32(r, "DEIM sizes")?;
            let p2 = get_u32(r, "DEIM sizes")?;
            let mut idx = Vec::with_capacity(p1 + p2);
            for _ in 0..p1 + p2 {
                idx.push(get_u32(r, "DEIM indices")?);
            }
            let col_idx = idx.split_off(p1);
            let row_idx = idx;
            if row_idx.iter().any(|&i| i >= basis.vl.nrows()) || col_idx.iter().any(|&j| j >= basis.wr.nrows()) {
                return Err(Error::Format("DEIM index out of range".into()));
            }
            if p1 != basis.nu_l() || p2 != basis.nu_r() {
                return Err(Error::Format("DEIM sizes do not match the basis".into()));
            }
            let pl = get_matrix_data::<T>(r, p1, p1, "DEIM factors")?;
            let pr = get_matrix_data::<T>(r, p2, p2, "DEIM factors")?;
            let lu_l = Lu::new(&pl, 1e-14).map_err(|e| Error::Format(e.to_string()))?;
            let lu_r = Lu::new(&pr, 1e-14).map_err(|e| Error::Format(e.to_string()))?;
            let (c_l, c_r) = (inverse_norm(&pl), inverse_norm(&pr));
            Some(DeimOperator { row_idx, col_idx, lu_l, lu_r, c_l, c_r })
        }
        m => return Err(Error::Format(format!("bad DEIM marker {m}"))),
    };
    expect_end(r)?;
    Ok((basis, deim))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Integrity(format!("cannot open {}: {e}", path.display())))
}

pub fn save_snapshots<T: Real>(path: &Path, stream: &SnapshotStream<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_snapshots(&mut w, stream)?;
    Ok(w.flush()?)
}

pub fn load_snapshots<T: Real>(path: &Path) -> Result<SnapshotStream<T>> {
    read_snapshots(&mut open(path)?)
}

pub fn save_basis<T: Real>(path: &Path, basis: &BasisPair<T>, deim: Option<&DeimOperator<T>>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_basis(&mut w, basis, deim)?;
    Ok(w.flush()?)
}

pub fn load_basis<T: Real>(path: &Path) -> Result<(BasisPair<T>, Option<DeimOperator<T>>)> {
    read_basis(&mut open(path)?)
}
