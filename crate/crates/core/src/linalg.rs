//! Complex least squares.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

/// A pivot `|R_ii|` smaller than this fraction of the norm of column `i`
/// counts as a rank loss.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Minimiser of `||A w - d||` by Householder QR.
pub fn ls_solve(a: &DMatrix<Complex64>, d: &[Complex64]) -> Result<Vec<Complex64>> {
    ls_solve_with_r(a, d).map(|(w, _)| w)
}

/// [`ls_solve`] that also returns the triangular factor `R`.
pub(crate) fn ls_solve_with_r(
    a: &DMatrix<Complex64>,
    d: &[Complex64],
) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    let (m, n) = a.shape();
    if d.len() != m {
        return Err(Error::size("right-hand side length", m, d.len()));
    }
    if m < n {
        return Err(Error::size("least-squares rows (>= columns)", n, m));
    }
    let col_norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let qr = a.clone().qr();
    let r = qr.r();
    let rank = (0..n)
        .filter(|&i| col_norms[i] > 0.0 && r[(i, i)].norm() > RANK_TOLERANCE * col_norms[i])
        .count();
    if rank < n {
        return Err(Error::Singular { rank, cols: n });
    }
    let mut rhs = DVector::from_column_slice(d);
    qr.q_tr_mul(&mut rhs);
    let top = rhs.rows(0, n).into_owned();
    let w = r
        .solve_upper_triangular(&top)
        .ok_or(Error::Singular { rank, cols: n })?;
    Ok((w.iter().copied().collect(), r))
}

/// Solves the Hermitian positive definite system `G w = r` by Cholesky.
pub(crate) fn hpd_solve(g: DMatrix<Complex64>, r: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = g.nrows();
    let chol = g.cholesky().ok_or(Error::Singular { rank: 0, cols: n })?;
    let w = chol.solve(&DVector::from_column_slice(r));
    Ok(w.iter().copied().collect())
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}
