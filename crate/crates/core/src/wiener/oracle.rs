//! Ground-truth decomposition of a non-causal Wiener row into child, parent and kin parts.

use num_complex::Complex64;

use super::noncausal::noncausal_rows;
use crate::error::{Error, Result};
use crate::ldg::LdgModel;
use crate::linalg::{self, CMatrix};
use crate::lti::{FrequencyGrid, FrequencyResponse};

/// Both `W_ji` and `W_ij` below this fraction of their row maxima count as an exact zero.
pub const CANCELLATION_TOL: f64 = 1e-7;

/// Child, parent and kin components of row `j`, each indexed by every node (entry `j` is zero).
#[derive(Debug, Clone, PartialEq)]
pub struct CkpRows {
    pub target: usize,
    pub child: Vec<FrequencyResponse>,
    pub parent: Vec<FrequencyResponse>,
    pub kin: Vec<FrequencyResponse>,
}

impl CkpRows {
    /// `C + P + K` for source `i`.
    pub fn total(&self, i: usize) -> FrequencyResponse {
        self.child[i]
            .add(&self.parent[i])
            .and_then(|s| s.add(&self.kin[i]))
            .expect("components share a grid")
    }
}

/// Evaluates `C_j* = Phi_ej h* (Phi_ej h h* + Phi_e')^-1` with `h = H_*j` and `Phi_e'` the
/// noise PSD with a unit entry at `j`, then `P_ji = (1 - C_j* h) H_ji` and `K_ji = -C_j* H_*i`.
pub fn ckp_decomposition(model: &LdgModel, grid: FrequencyGrid, j: usize) -> Result<CkpRows> {
    let n = model.n();
    if j >= n {
        return Err(Error::NodeOutOfRange { node: j, n });
    }
    let cert = model.validate(grid);
    if !cert.well_posed {
        return Err(Error::IllPosed { min_det: cert.min_det, bin: cert.min_det_bin });
    }
    let zero = vec![Complex64::new(0.0, 0.0); grid.len()];
    let (mut c, mut p, mut k) = (vec![zero.clone(); n], vec![zero.clone(); n], vec![zero; n]);
    for (bin, w) in grid.omegas().enumerate() {
        let h = model.transfer_matrix_at(w);
        let phi_e = model.noise_psd_at(w);
        let col = h.column(j).into_owned();
        let mut m = col.clone() * col.adjoint() * Complex64::new(phi_e[j], 0.0);
        for d in 0..n {
            m[(d, d)] += if d == j { 1.0 } else { phi_e[d] };
        }
        let chol = linalg::cholesky(&m).ok_or(Error::SingularBin { bin, condition: f64::INFINITY })?;
        // C* = M^-1 h Phi_ej for Hermitian M
        let rhs = CMatrix::from_column_slice(n, 1, col.as_slice());
        let c_row: CMatrix = chol.solve(&rhs).adjoint() * Complex64::new(phi_e[j], 0.0);
        let gain = Complex64::new(1.0, 0.0) - (&c_row * &col)[(0, 0)];
        for i in (0..n).filter(|&i| i != j) {
            c[i][bin] = c_row[(0, i)];
            p[i][bin] = gain * h[(j, i)];
            k[i][bin] = -(&c_row * h.column(i))[(0, 0)];
        }
    }
    let wrap = |v: Vec<Vec<Complex64>>| -> Vec<FrequencyResponse> {
        v.into_iter()
            .map(|x| FrequencyResponse::from_values(grid, x).expect("one value per bin"))
            .collect()
    };
    Ok(CkpRows { target: j, child: wrap(c), parent: wrap(p), kin: wrap(k) })
}

/// Kin pairs `{i, j}` whose Wiener entries `W_ji` and `W_ij` both vanish, measured relative to
/// each row's largest entry.
pub fn detect_cancellation(model: &LdgModel, grid: FrequencyGrid) -> Result<Vec<(usize, usize)>> {
    let rows = noncausal_rows(&model.analytic_psd(grid)?, 0.0)?;
    let relative = |j: usize, i: usize| {
        let max = rows[j].max_norm();
        if max == 0.0 { 0.0 } else { rows[j].norm(i) / max }
    };
    Ok(model
        .graph()
        .kin_graph()
        .edges()
        .filter(|&(i, j)| relative(j, i) < CANCELLATION_TOL && relative(i, j) < CANCELLATION_TOL)
        .collect())
}
