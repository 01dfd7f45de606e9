//! Small dense complex-matrix helpers used bin by bin.

use nalgebra::{Cholesky, DMatrix, Dyn};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

/// Cholesky pivots whose squared ratio falls below this are treated as a singular matrix.
pub const PIVOT_RATIO_FLOOR: f64 = 1e-13;

pub fn czero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    (a - a.adjoint()).iter().fold(0.0, |acc, v| acc.max(v.norm()))
}

pub fn spectral_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

/// 2-norm condition number; numerically rank-deficient matrices report `+inf`.
pub fn condition_number(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let sv = a.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if smax == 0.0 || smin <= smax * f64::EPSILON * a.nrows() as f64 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Cholesky factor of a Hermitian positive-definite matrix, rejecting near-singular pivots.
pub fn cholesky(a: &CMatrix) -> Option<Cholesky<Complex64, Dyn>> {
    let chol = Cholesky::new(hermitian_part(a))?;
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..l.nrows() {
        let d = l[(i, i)].re;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if l.nrows() > 0 && (!(lo > 0.0) || (lo / hi).powi(2) < PIVOT_RATIO_FLOOR) {
        return None;
    }
    Some(chol)
}

pub fn hpd_inverse(a: &CMatrix) -> Option<CMatrix> {
    cholesky(a).map(|c| c.inverse())
}

/// Rows and columns picked by index lists.
pub fn select(a: &CMatrix, rows: &[usize], cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), cols.len(), |r, c| a[(rows[r], cols[c])])
}

/// Lower Cholesky factor of a Hermitian PD matrix without the pivot floor.
pub fn lower_cholesky(a: &CMatrix) -> Option<CMatrix> {
    Cholesky::new(hermitian_part(a)).map(|c| c.unpack())
}
