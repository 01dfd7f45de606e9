//! Bounds on how far measurement noise can move a non-causal Wiener row.

use super::decide::EdgeDecision;
use super::noncausal::others;
use super::row::WienerRow;
use crate::error::{Error, Result};
use crate::graph::UndirectedGraph;
use crate::linalg::{self, CMatrix};
use crate::spectra::SpectralMatrix;

/// Per-bin `(||Phi_{y_j, y_I}||, ||Phi_{y_I}^-1||)`; the inverse norm is `+inf` on singular bins.
fn row_norms(s_y: &SpectralMatrix, j: usize) -> Result<Vec<(f64, f64)>> {
    let n = s_y.n();
    if j >= n {
        return Err(Error::NodeOutOfRange { node: j, n });
    }
    let idx = others(n, j);
    Ok(s_y
        .values()
        .iter()
        .map(|b| {
            let a = linalg::spectral_norm(&linalg::select(b, &[j], &idx));
            let q = linalg::hpd_inverse(&linalg::select(b, &idx, &idx))
                .map_or(f64::INFINITY, |inv| linalg::spectral_norm(&inv));
            (a, q)
        })
        .collect())
}

/// `a q d / (1/q - d)`, or `+inf` when the denominator is not positive.
fn bound(a: f64, q: f64, d: f64) -> f64 {
    if d == 0.0 && q.is_finite() {
        return 0.0;
    }
    let denom = 1.0 / q - d;
    if denom > 0.0 { a * q * d / denom } else { f64::INFINITY }
}

/// Per-bin bound on `||W_hat_j - W_j||` where `W_hat_j` is computed from the corrupted spectrum
/// `s_y` and `W_j` from the clean one, with `||.||` the spectral norm and
/// `d = ||Phi_eta||`. Bins where `1/||Phi_{y_I}^-1|| <= ||Phi_eta||` report `+inf`.
pub fn robustness_bound(s_y: &SpectralMatrix, phi_eta: &SpectralMatrix, j: usize) -> Result<Vec<f64>> {
    s_y.grid().check_same(&phi_eta.grid())?;
    if phi_eta.n() != s_y.n() {
        return Err(Error::SizeMismatch { left: s_y.n(), right: phi_eta.n() });
    }
    Ok(row_norms(s_y, j)?
        .into_iter()
        .zip(phi_eta.values())
        .map(|((a, q), eta)| bound(a, q, linalg::spectral_norm(eta)))
        .collect())
}

/// Accepts `{i, j}` when some bin has `|W_hat_ji| > a q D / (1/q - D)`, the largest deviation
/// noise with `||Phi_eta|| <= D` could explain.
///
/// Each decision's score is the largest ratio of `|W_hat_ji|` to that bound over valid bins,
/// with threshold 1.
pub fn robust_detect(
    s_y: &SpectralMatrix,
    d: &[f64],
    rows: &[WienerRow],
) -> Result<(UndirectedGraph, Vec<EdgeDecision>)> {
    let n = s_y.n();
    let m = s_y.grid().len();
    if d.len() != m {
        return Err(Error::GridMismatch { left: m, right: d.len() });
    }
    if rows.len() != n {
        return Err(Error::SizeMismatch { left: n, right: rows.len() });
    }
    if let Some(&bad) = d.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidConfig(format!("noise bound must be finite and non-negative, got {bad}")));
    }
    let mut bounds = Vec::with_capacity(n);
    for (j, row) in rows.iter().enumerate() {
        if row.target() != j {
            return Err(Error::InvalidConfig(format!("row {j} has target {}", row.target())));
        }
        if let Some(g) = row.grid() {
            g.check_same(&s_y.grid())?;
        }
        let b: Vec<f64> =
            row_norms(s_y, j)?.into_iter().zip(d).map(|((a, q), &dk)| bound(a, q, dk)).collect();
        if n > 1 && b.iter().all(|v| v.is_infinite()) {
            return Err(Error::NoValidBin(j));
        }
        bounds.push(b);
    }
    let ratio = |j: usize, i: usize| -> f64 {
        let Some(entry) = rows[j].entry(i) else { return 0.0 };
        entry
            .values()
            .iter()
            .zip(&bounds[j])
            .filter(|(_, b)| b.is_finite())
            .map(|(w, &b)| {
                let w = w.norm();
                if w == 0.0 { 0.0 } else if b == 0.0 { f64::INFINITY } else { w / b }
            })
            .fold(0.0, f64::max)
    };
    let mut graph = UndirectedGraph::new(n);
    let mut decisions = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let dec = EdgeDecision::new(i, j, ratio(j, i).max(ratio(i, j)), 1.0);
            if dec.accepted {
                graph.add_edge(i, j)?;
            }
            decisions.push(dec);
        }
    }
    Ok((graph, decisions))
}

/// `(Q + D)^-1 - Q^-1` evaluated as `-Q^-1 (Q^-1 + D^-1)^-1 Q^-1`.
pub fn perturbed_inverse_difference(q: &CMatrix, delta: &CMatrix) -> Option<CMatrix> {
    let qi = q.clone().try_inverse()?;
    let di = delta.clone().try_inverse()?;
    let mid = (&qi + di).try_inverse()?;
    Some(-(&qi * mid * &qi))
}
