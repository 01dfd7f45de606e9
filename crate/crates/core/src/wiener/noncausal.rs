use rayon::prelude::*;

use super::row::{WienerMode, WienerRow};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::lti::{self, FrequencyResponse};
use crate::spectra::{condition_report, SpectralMatrix};

pub(crate) fn others(n: usize, j: usize) -> Vec<usize> {
    (0..n).filter(|&i| i != j).collect()
}

/// Builds the singular-bin error from the worst-conditioned bin of `s`.
pub(crate) fn singular(s: &SpectralMatrix) -> Error {
    let report = condition_report(s);
    Error::SingularBin { bin: report.worst_bin, condition: report.worst }
}

/// Transposes per-bin row vectors into one response per column.
pub(crate) fn columns_to_responses(
    s: &SpectralMatrix,
    per_bin: &[CMatrix],
    width: usize,
) -> Vec<FrequencyResponse> {
    (0..width)
        .map(|c| {
            let values = per_bin.iter().map(|r| r[(0, c)]).collect();
            FrequencyResponse::from_values(s.grid(), values).expect("one value per bin")
        })
        .collect()
}

/// PSD of `shift * x_j - W x_idx` at one bin, with `w` the `1 x |idx|` filter row.
pub(crate) fn error_psd(
    b: &CMatrix,
    j: usize,
    idx: &[usize],
    w: &CMatrix,
    shift: num_complex::Complex64,
) -> f64 {
    let c = linalg::select(b, &[j], idx) * shift;
    let phi_i = linalg::select(b, idx, idx);
    let v = b[(j, j)] - (w * c.adjoint())[(0, 0)] - (&c * w.adjoint())[(0, 0)]
        + (w * phi_i * w.adjoint())[(0, 0)];
    v.re.max(0.0)
}

/// `W_j = Phi_{j, I_j} (Phi_{I_j} + ridge I)^-1` with `I_j` every node but `j`.
pub fn noncausal_wiener_row(s: &SpectralMatrix, j: usize, ridge: f64) -> Result<WienerRow> {
    let n = s.n();
    if j >= n {
        return Err(Error::NodeOutOfRange { node: j, n });
    }
    let idx = others(n, j);
    let per_bin: Vec<Option<CMatrix>> = s
        .values()
        .par_iter()
        .map(|b| {
            let mut a = linalg::select(b, &idx, &idx);
            for d in 0..idx.len() {
                a[(d, d)] += ridge;
            }
            let c = linalg::select(b, &[j], &idx);
            // W* = A^-1 c* for Hermitian A
            linalg::cholesky(&a).map(|chol| chol.solve(&c.adjoint()).adjoint())
        })
        .collect();
    if per_bin.iter().any(Option::is_none) {
        return Err(singular(&s.select(&idx)?.with_ridge(ridge)));
    }
    let per_bin: Vec<CMatrix> = per_bin.into_iter().map(Option::unwrap).collect();
    let entries = columns_to_responses(s, &per_bin, idx.len());
    let one = num_complex::Complex64::new(1.0, 0.0);
    let err = s.values().iter().zip(&per_bin).map(|(b, w)| error_psd(b, j, &idx, w, one)).collect();
    Ok(WienerRow::new(j, WienerMode::Noncausal, idx, entries, err))
}

/// Non-causal rows for every node, in node order.
pub fn noncausal_rows(s: &SpectralMatrix, ridge: f64) -> Result<Vec<WienerRow>> {
    (0..s.n()).map(|j| noncausal_wiener_row(s, j, ridge)).collect()
}

/// `score[i][j]` is the L2 norm over bins of `(Phi^-1)_{ij}`.
pub fn inverse_psd_kin_matrix(s: &SpectralMatrix) -> Result<Vec<Vec<f64>>> {
    let n = s.n();
    let inverses: Vec<Option<CMatrix>> = s.values().par_iter().map(linalg::hpd_inverse).collect();
    if inverses.iter().any(Option::is_none) {
        return Err(singular(s));
    }
    let inverses: Vec<CMatrix> = inverses.into_iter().map(Option::unwrap).collect();
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let series: Vec<_> = inverses.iter().map(|b| b[(i, j)]).collect();
                    lti::l2_norm(&series)
                })
                .collect()
        })
        .collect())
}
