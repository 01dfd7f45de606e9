use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::factor::{spectral_factorize, FactorConfig};
use super::noncausal::{columns_to_responses, error_psd, others, singular};
use super::row::{WienerMode, WienerRow};
use crate::error::{Error, Result};
use crate::fourier;
use crate::linalg::CMatrix;
use crate::lti::{tail_energy_fraction, zero_negative_lags};
use crate::spectra::{condition_report, SpectralMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CausalConfig {
    pub factor: FactorConfig,
    /// Largest admissible energy fraction beyond `|lag| > m/4` before truncation.
    pub tail_tol: f64,
}

impl Default for CausalConfig {
    fn default() -> Self {
        Self { factor: FactorConfig::default(), tail_tol: 1e-6 }
    }
}

/// Causal Wiener estimate of node `j` from every other node:
/// `W = {Phi_{j,I} Phi_I^-1 S}_C S^-1` with `Phi_I = S S*`.
pub fn causal_wiener_row(s: &SpectralMatrix, j: usize) -> Result<WienerRow> {
    causal_wiener_row_with(s, j, &CausalConfig::default())
}

pub fn causal_wiener_row_with(s: &SpectralMatrix, j: usize, cfg: &CausalConfig) -> Result<WienerRow> {
    let n = s.n();
    if j >= n {
        return Err(Error::NodeOutOfRange { node: j, n });
    }
    let idx = others(n, j);
    causal_row(s, j, &idx, WienerMode::Causal, |_| Complex64::new(1.0, 0.0), cfg)
}

/// One-step-ahead predictor of `x_j(t + 1)` from the past of all `n` signals, including `x_j`.
pub fn granger_row(s: &SpectralMatrix, j: usize) -> Result<WienerRow> {
    granger_row_with(s, j, &CausalConfig::default())
}

pub fn granger_row_with(s: &SpectralMatrix, j: usize, cfg: &CausalConfig) -> Result<WienerRow> {
    let n = s.n();
    if j >= n {
        return Err(Error::NodeOutOfRange { node: j, n });
    }
    let idx: Vec<usize> = (0..n).collect();
    let factored = factor_inverses(s, cfg)?;
    granger_from(s, j, &idx, &factored, cfg)
}

/// Granger rows for every node, sharing one factorization of the full spectrum.
pub fn granger_rows(s: &SpectralMatrix, cfg: &CausalConfig) -> Result<Vec<WienerRow>> {
    let idx: Vec<usize> = (0..s.n()).collect();
    let factored = factor_inverses(s, cfg)?;
    (0..s.n()).map(|j| granger_from(s, j, &idx, &factored, cfg)).collect()
}

/// Causal rows for every node.
pub fn causal_rows(s: &SpectralMatrix, cfg: &CausalConfig) -> Result<Vec<WienerRow>> {
    (0..s.n()).map(|j| causal_wiener_row_with(s, j, cfg)).collect()
}

fn granger_from(
    s: &SpectralMatrix,
    j: usize,
    idx: &[usize],
    factored: &[CMatrix],
    cfg: &CausalConfig,
) -> Result<WienerRow> {
    let grid = s.grid();
    // the target z x_j advances x_j by one sample
    let shift = |k: usize| Complex64::from_polar(1.0, grid.omega(k));
    truncated_row(s, j, idx, WienerMode::Granger, shift, factored, cfg)
}

/// Per-bin `S^-1` of the factor of `s`.
fn factor_inverses(s: &SpectralMatrix, cfg: &CausalConfig) -> Result<Vec<CMatrix>> {
    let factor = spectral_factorize(s, &cfg.factor).map_err(|e| match e {
        Error::FactorizationFailed { .. } if condition_report(s).worst.is_infinite() => singular(s),
        other => other,
    })?;
    factor.inverses().ok_or_else(|| singular(s))
}

fn causal_row(
    s: &SpectralMatrix,
    j: usize,
    idx: &[usize],
    mode: WienerMode,
    shift: impl Fn(usize) -> Complex64 + Sync,
    cfg: &CausalConfig,
) -> Result<WienerRow> {
    let sub = s.select(idx)?;
    if sub.n() == 0 {
        let err = s.values().iter().map(|b| b[(j, j)].re).collect();
        return Ok(WienerRow::new(j, mode, Vec::new(), Vec::new(), err));
    }
    let inverses = factor_inverses(&sub, cfg)?;
    truncated_row(s, j, idx, mode, shift, &inverses, cfg)
}

/// `{shift * Phi_{j,I} S^-*}_C S^-1` given the per-bin inverses of the factor of `Phi_I`.
fn truncated_row(
    s: &SpectralMatrix,
    j: usize,
    idx: &[usize],
    mode: WienerMode,
    shift: impl Fn(usize) -> Complex64 + Sync,
    inverses: &[CMatrix],
    cfg: &CausalConfig,
) -> Result<WienerRow> {
    let w = idx.len();
    let m = s.grid().len();
    // Phi_{j,I} Phi_I^-1 S = Phi_{j,I} S^-*
    let g: Vec<CMatrix> = s
        .values()
        .par_iter()
        .zip(inverses)
        .enumerate()
        .map(|(k, (b, inv))| {
            let c = CMatrix::from_fn(1, w, |_, col| b[(j, idx[col])]);
            c * inv.adjoint() * shift(k)
        })
        .collect();
    let mut taps: Vec<Vec<Complex64>> = (0..w)
        .map(|col| fourier::inverse(&g.iter().map(|r| r[(0, col)]).collect::<Vec<_>>()))
        .collect();
    // measured over the whole row so that entries at rounding level do not dominate
    let energy = |t: &Vec<Complex64>| t.iter().map(|v| v.norm_sqr()).sum::<f64>();
    let total: f64 = taps.iter().map(energy).sum();
    let tail: f64 = taps.iter().map(|t| tail_energy_fraction(t) * energy(t)).sum();
    if total > 0.0 && tail / total > cfg.tail_tol {
        return Err(Error::GridTooSmall { fraction: tail / total, m });
    }
    let mut truncated = vec![CMatrix::zeros(1, w); m];
    for (col, t) in taps.iter_mut().enumerate() {
        zero_negative_lags(t);
        for (k, v) in fourier::forward(t).into_iter().enumerate() {
            truncated[k][(0, col)] = v;
        }
    }
    let per_bin: Vec<CMatrix> = truncated.iter().zip(inverses).map(|(t, inv)| t * inv).collect();
    let entries = columns_to_responses(s, &per_bin, w);
    let err = s
        .values()
        .iter()
        .zip(&per_bin)
        .enumerate()
        .map(|(k, (b, row))| error_psd(b, j, idx, row, shift(k)))
        .collect();
    Ok(WienerRow::new(j, mode, idx.to_vec(), entries, err))
}
