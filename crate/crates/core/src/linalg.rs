//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Result, VecmError};

pub(crate) fn cholesky(m: &DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or(VecmError::NotPositiveDefinite(what))
}

/// Thin SVD `M = U diag(s) Vᵀ` with `s` in descending order.
///
/// Computed with faer: nalgebra's SVD loses accuracy on exactly rank-deficient
/// input, which is the normal case for `Π`.
pub(crate) struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn svd(m: &DMatrix<f64>) -> Result<Svd> {
    let (r, c) = m.shape();
    let d = r.min(c);
    let f = faer::Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)]);
    let out = f.thin_svd().map_err(|_| VecmError::SvdFailure)?;
    let (u, sd, v) = (out.U(), out.S(), out.V());
    Ok(Svd {
        u: DMatrix::from_fn(r, d, |i, j| u[(i, j)]),
        s: (0..d).map(|j| sd[j]).collect(),
        v: DMatrix::from_fn(c, d, |i, j| v[(i, j)]),
    })
}

/// Singular values in descending order.
pub(crate) fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(svd(m)?.s)
}

/// Moore–Penrose inverse, treating singular values below `rtol · σ₁` as zero.
pub(crate) fn pseudo_inverse(m: &DMatrix<f64>, rtol: f64) -> Result<DMatrix<f64>> {
    let Svd { u, s, v } = svd(m)?;
    let cut = rtol * s.first().copied().unwrap_or(0.0);
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (j, &sj) in s.iter().enumerate() {
        if sj > cut {
            out.ger(1.0 / sj, &v.column(j), &u.column(j), 1.0);
        }
    }
    Ok(out)
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub(crate) fn sym_eig_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigenvalues();
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(VecmError::NonFiniteData { what, row: i, col: j });
            }
        }
    }
    Ok(())
}

pub(crate) fn check_shape(
    m: &DMatrix<f64>,
    rows: usize,
    cols: usize,
    what: &str,
) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(VecmError::InvalidInput(format!(
            "{what} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}
