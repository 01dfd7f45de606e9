//! Minimum-phase spectral factorization `Phi = S S*` on a frequency grid.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier;
use crate::linalg::{self, CMatrix};
use crate::lti::{anticausal_energy_fraction, FrequencyGrid};
use crate::spectra::SpectralMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FactorConfig {
    /// Required max-bin relative residual `||S S* - Phi||_F / ||Phi||_F`.
    pub tol: f64,
    /// Largest admissible anticausal energy fraction of `S` and `S^-1`.
    pub causal_tol: f64,
    pub max_iter: usize,
}

impl Default for FactorConfig {
    fn default() -> Self {
        Self { tol: 1e-8, causal_tol: 1e-6, max_iter: 200 }
    }
}

/// Causal, causally invertible factor with lower-triangular, positive-diagonal lag-0 term.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFactor {
    grid: FrequencyGrid,
    values: Vec<CMatrix>,
    pub iterations: usize,
    pub residual: f64,
    pub anticausal_energy: f64,
    pub inverse_anticausal_energy: f64,
}

impl SpectralFactor {
    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn values(&self) -> &[CMatrix] {
        &self.values
    }

    pub fn bin(&self, k: usize) -> &CMatrix {
        &self.values[k]
    }

    pub fn inverses(&self) -> Option<Vec<CMatrix>> {
        self.values.iter().map(|s| s.clone().try_inverse()).collect()
    }

    /// Lag-0 coefficient `S_0 = (1/m) sum_k S(w_k)`.
    pub fn lag_zero(&self) -> CMatrix {
        let n = self.values.first().map_or(0, |v| v.nrows());
        let sum = self.values.iter().fold(CMatrix::zeros(n, n), |a, b| a + b);
        sum / Complex64::new(self.grid.len() as f64, 0.0)
    }
}

/// Wilson iteration for `n > 1`, cepstral method for scalar spectra.
pub fn spectral_factorize(phi: &SpectralMatrix, cfg: &FactorConfig) -> Result<SpectralFactor> {
    if phi.n() == 1 {
        cepstral_factorize(phi, cfg)
    } else {
        wilson_factorize(phi, cfg)
    }
}

fn residual(phi: &[CMatrix], s: &[CMatrix]) -> f64 {
    phi.par_iter()
        .zip(s)
        .map(|(p, s)| {
            let denom = p.norm();
            let r = (s * s.adjoint() - p).norm();
            if denom == 0.0 { r } else { r / denom }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
}

/// Per-entry inverse DFT over bins; result indexed `[lag][(r, c)]`.
fn to_lags(values: &[CMatrix]) -> Vec<CMatrix> {
    let (m, rows, cols) = (values.len(), values[0].nrows(), values[0].ncols());
    let series: Vec<Vec<Complex64>> = (0..rows * cols)
        .into_par_iter()
        .map(|e| fourier::inverse(&values.iter().map(|v| v[(e / cols, e % cols)]).collect::<Vec<_>>()))
        .collect();
    (0..m).map(|l| CMatrix::from_fn(rows, cols, |r, c| series[r * cols + c][l])).collect()
}

fn to_bins(lags: &[CMatrix]) -> Vec<CMatrix> {
    let (m, rows, cols) = (lags.len(), lags[0].nrows(), lags[0].ncols());
    let series: Vec<Vec<Complex64>> = (0..rows * cols)
        .into_par_iter()
        .map(|e| fourier::forward(&lags.iter().map(|v| v[(e / cols, e % cols)]).collect::<Vec<_>>()))
        .collect();
    (0..m).map(|k| CMatrix::from_fn(rows, cols, |r, c| series[r * cols + c][k])).collect()
}

fn matrix_anticausal_energy(values: &[CMatrix]) -> f64 {
    let lags = to_lags(values);
    let m = lags.len();
    let energy = |range: std::ops::Range<usize>| -> f64 {
        lags[range].iter().map(|l| l.norm_squared()).sum()
    };
    let total = energy(0..m);
    if total == 0.0 { 0.0 } else { energy(m / 2..m) / total }
}

fn finish(
    grid: FrequencyGrid,
    phi: &SpectralMatrix,
    values: Vec<CMatrix>,
    iterations: usize,
    cfg: &FactorConfig,
) -> Result<SpectralFactor> {
    let res = residual(phi.values(), &values);
    let inverses: Option<Vec<CMatrix>> = values.iter().map(|s| s.clone().try_inverse()).collect();
    let inverses = inverses.ok_or(Error::FactorizationFailed { iterations, residual: res })?;
    let anticausal_energy = matrix_anticausal_energy(&values);
    let inverse_anticausal_energy = matrix_anticausal_energy(&inverses);
    if !(res < cfg.tol)
        || !(anticausal_energy < cfg.causal_tol)
        || !(inverse_anticausal_energy < cfg.causal_tol)
    {
        return Err(Error::FactorizationFailed { iterations, residual: res });
    }
    Ok(SpectralFactor {
        grid,
        values,
        iterations,
        residual: res,
        anticausal_energy,
        inverse_anticausal_energy,
    })
}

/// Wilson's Newton iteration `S <- S [S^-1 Phi S^-* + I]_+`, started from the Cholesky factor
/// of the lag-0 covariance.
pub fn wilson_factorize(phi: &SpectralMatrix, cfg: &FactorConfig) -> Result<SpectralFactor> {
    let (grid, n) = (phi.grid(), phi.n());
    let m = grid.len();
    let id = CMatrix::identity(n, n);
    let r0 = phi.values().iter().fold(CMatrix::zeros(n, n), |a, b| a + b) / Complex64::new(m as f64, 0.0);
    let s0 = linalg::lower_cholesky(&r0).ok_or(Error::FactorizationFailed { iterations: 0, residual: f64::INFINITY })?;
    let mut s = vec![s0; m];
    let mut res = residual(phi.values(), &s);
    let mut iterations = 0;
    while res >= cfg.tol && iterations < cfg.max_iter {
        iterations += 1;
        let g: Option<Vec<CMatrix>> = phi
            .values()
            .par_iter()
            .zip(&s)
            .map(|(p, s)| {
                let inv = s.clone().try_inverse()?;
                Some(&inv * p * inv.adjoint() + &id)
            })
            .collect();
        let g = g.ok_or(Error::FactorizationFailed { iterations, residual: res })?;
        let mut lags = to_lags(&g);
        let g0 = &lags[0];
        lags[0] = CMatrix::from_fn(n, n, |r, c| match r.cmp(&c) {
            std::cmp::Ordering::Greater => g0[(r, c)],
            std::cmp::Ordering::Equal => g0[(r, c)] * 0.5,
            std::cmp::Ordering::Less => Complex64::new(0.0, 0.0),
        });
        for l in &mut lags[m / 2..] {
            l.fill(Complex64::new(0.0, 0.0));
        }
        let plus = to_bins(&lags);
        s = s.par_iter().zip(&plus).map(|(s, p)| s * p).collect();
        let next = residual(phi.values(), &s);
        if !next.is_finite() {
            return Err(Error::FactorizationFailed { iterations, residual: next });
        }
        res = next;
    }
    if res >= cfg.tol {
        return Err(Error::FactorizationFailed { iterations, residual: res });
    }
    finish(grid, phi, s, iterations, cfg)
}

/// Closed-form scalar factor `S = exp({log Phi}_+)` via the real cepstrum.
pub fn cepstral_factorize(phi: &SpectralMatrix, cfg: &FactorConfig) -> Result<SpectralFactor> {
    if phi.n() != 1 {
        return Err(Error::SizeMismatch { left: 1, right: phi.n() });
    }
    let grid = phi.grid();
    let m = grid.len();
    let mut logs = Vec::with_capacity(m);
    for (bin, v) in phi.values().iter().enumerate() {
        let p = v[(0, 0)].re;
        if !(p > 0.0) {
            return Err(Error::SingularBin { bin, condition: f64::INFINITY });
        }
        logs.push(Complex64::new(p.ln(), 0.0));
    }
    let mut cep = fourier::inverse(&logs);
    cep[0] *= 0.5;
    for c in &mut cep[m / 2..] {
        *c = Complex64::new(0.0, 0.0);
    }
    let values = fourier::forward(&cep)
        .into_iter()
        .map(|v| CMatrix::from_element(1, 1, v.exp()))
        .collect();
    debug_assert!(anticausal_energy_fraction(&cep) == 0.0);
    finish(grid, phi, values, 1, cfg)
}
