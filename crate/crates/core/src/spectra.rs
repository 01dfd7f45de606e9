//! Cross-power spectral density matrices and their Welch estimation from sampled panels.
//!
//! Convention: `Phi_xy(w) = sum_tau E[x(t + tau) y(t)] e^{-i w tau}`, so for `y = H x` one has
//! `Phi_yx = H Phi_x` and `Phi_xy = Phi_x H*`. The Welch estimator normalizes by the window
//! power, so a unit-variance white channel has a flat diagonal near one and
//! `(1/m) sum_k Phi_jj(w_k)` approximates the variance of channel `j`.

use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier;
use crate::ldg::TimeSeriesPanel;
use crate::linalg::{self, CMatrix};
use crate::lti::FrequencyGrid;

const CSDM_MAGIC: &[u8; 4] = b"CSDM";
/// Largest channel count written by [`SpectralMatrix::to_json`].
pub const JSON_MAX_CHANNELS: usize = 8;

/// Hermitian `n x n` matrix field sampled on a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMatrix {
    grid: FrequencyGrid,
    n: usize,
    values: Vec<CMatrix>,
}

impl SpectralMatrix {
    pub fn new(grid: FrequencyGrid, values: Vec<CMatrix>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch { left: grid.len(), right: values.len() });
        }
        let n = values.first().map_or(0, |v| v.nrows());
        for v in &values {
            if v.nrows() != n || v.ncols() != n {
                return Err(Error::SizeMismatch { left: n, right: v.nrows().max(v.ncols()) });
            }
        }
        Ok(Self { grid, n, values })
    }

    /// Evaluates `f` on bins `0..=m/2`, symmetrizes, and fills the upper half by conjugation.
    /// Bins 0 and `m/2` are forced real; the result satisfies every invariant exactly.
    pub fn from_half_spectrum<F>(grid: FrequencyGrid, n: usize, f: F) -> Result<Self>
    where
        F: Fn(usize) -> Result<CMatrix> + Sync,
    {
        let m = grid.len();
        let half: Vec<CMatrix> = (0..=m / 2).into_par_iter().map(&f).collect::<Result<_>>()?;
        Self::from_half_values(grid, n, half)
    }

    pub(crate) fn from_half_values(
        grid: FrequencyGrid,
        n: usize,
        half: Vec<CMatrix>,
    ) -> Result<Self> {
        let m = grid.len();
        let mut values = vec![CMatrix::zeros(n, n); m];
        for (k, raw) in half.into_iter().enumerate() {
            if raw.nrows() != n || raw.ncols() != n {
                return Err(Error::SizeMismatch { left: n, right: raw.nrows() });
            }
            let mut h = linalg::hermitian_part(&raw);
            for i in 0..n {
                h[(i, i)].im = 0.0;
            }
            if k == 0 || k == m / 2 {
                h.iter_mut().for_each(|v| v.im = 0.0);
            }
            if k != 0 && k != m / 2 {
                values[m - k] = h.map(|v| v.conj());
            }
            values[k] = h;
        }
        Ok(Self { grid, n, values })
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bin(&self, k: usize) -> &CMatrix {
        &self.values[k]
    }

    pub fn values(&self) -> &[CMatrix] {
        &self.values
    }

    /// Per-bin samples of entry `(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> Vec<Complex64> {
        self.values.iter().map(|b| b[(i, j)]).collect()
    }

    /// Spectra of the channels listed in `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        for &i in idx {
            if i >= self.n {
                return Err(Error::NodeOutOfRange { node: i, n: self.n });
            }
        }
        let values = self.values.iter().map(|b| linalg::select(b, idx, idx)).collect();
        Ok(Self { grid: self.grid, n: idx.len(), values })
    }

    pub fn scale(&self, c: f64) -> Self {
        let values = self.values.iter().map(|b| b.map(|v| v * c)).collect();
        Self { grid: self.grid, n: self.n, values }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        if self.n != other.n {
            return Err(Error::SizeMismatch { left: self.n, right: other.n });
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self { grid: self.grid, n: self.n, values })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    /// Adds `eps * I` at every bin.
    pub fn with_ridge(&self, eps: f64) -> Self {
        if eps == 0.0 {
            return self.clone();
        }
        let id = CMatrix::identity(self.n, self.n).map(|v| v * eps);
        let values = self.values.iter().map(|b| b + &id).collect();
        Self { grid: self.grid, n: self.n, values }
    }

    /// Blackman-Tukey smoothing: circular lags are weighted by a Parzen window that vanishes
    /// at `|lag| >= max_lag`. The Parzen kernel is nonnegative, so positive definiteness is kept.
    pub fn lag_window(&self, max_lag: usize) -> Result<Self> {
        let m = self.grid.len();
        if max_lag == 0 || max_lag > m / 2 {
            return Err(Error::InvalidConfig(format!(
                "lag window must lie in 1..={}, got {max_lag}",
                m / 2
            )));
        }
        let weights: Vec<f64> = (0..m)
            .map(|k| parzen(fourier::signed_lag(k, m) as f64 / max_lag as f64))
            .collect();
        let n = self.n;
        let entries: Vec<Vec<Complex64>> = (0..n * n)
            .into_par_iter()
            .map(|e| {
                let mut lags = fourier::inverse(&self.entry(e / n, e % n));
                for (l, w) in lags.iter_mut().zip(&weights) {
                    *l *= w;
                }
                fourier::forward(&lags)
            })
            .collect();
        let values = (0..m)
            .map(|k| linalg::hermitian_part(&CMatrix::from_fn(n, n, |a, b| entries[a * n + b][k])))
            .collect();
        Ok(Self { grid: self.grid, n, values })
    }

    /// Largest deviation from Hermitian symmetry over all bins.
    pub fn hermitian_defect(&self) -> f64 {
        self.values.iter().fold(0.0, |a, b| a.max(linalg::hermitian_defect(b)))
    }

    /// Largest deviation from `values[m-k] = conj(values[k])`.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.grid.len() {
            let mk = self.grid.mirror(k);
            let d = (&self.values[mk] - self.values[k].map(|v| v.conj())).iter().fold(0.0f64, |a, v| a.max(v.norm()));
            worst = worst.max(d);
        }
        worst
    }

    /// Mean over bins of `||A - B||_F / ||B||_F`, with `self` as A.
    pub fn mean_relative_error(&self, reference: &Self) -> Result<f64> {
        reference.grid.check_same(&self.grid)?;
        if self.n != reference.n {
            return Err(Error::SizeMismatch { left: self.n, right: reference.n });
        }
        let total: f64 = self
            .values
            .iter()
            .zip(&reference.values)
            .map(|(a, b)| (a - b).norm() / b.norm())
            .sum();
        Ok(total / self.grid.len() as f64)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CSDM_MAGIC)?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&(self.grid.len() as u32).to_le_bytes())?;
        for b in &self.values {
            for r in 0..self.n {
                for c in 0..self.n {
                    w.write_all(&b[(r, c)].re.to_le_bytes())?;
                    w.write_all(&b[(r, c)].im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CSDM_MAGIC {
            return Err(Error::Format("not a CSDM file".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let n = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let m = u32::from_le_bytes(word) as usize;
        let grid = FrequencyGrid::new(m)?;
        let mut f = [0u8; 8];
        let mut next = |r: &mut R| -> Result<f64> {
            r.read_exact(&mut f)?;
            Ok(f64::from_le_bytes(f))
        };
        let mut values = Vec::with_capacity(m);
        for _ in 0..m {
            let mut b = CMatrix::zeros(n, n);
            for row in 0..n {
                for col in 0..n {
                    let re = next(&mut r)?;
                    let im = next(&mut r)?;
                    b[(row, col)] = Complex64::new(re, im);
                }
            }
            values.push(b);
        }
        Self::new(grid, values)
    }

    pub fn to_json(&self) -> Result<String> {
        if self.n > JSON_MAX_CHANNELS {
            return Err(Error::Format(format!(
                "JSON output is limited to {JSON_MAX_CHANNELS} channels, got {}",
                self.n
            )));
        }
        let doc = SpectralDocument {
            n: self.n,
            m: self.grid.len(),
            values: self
                .values
                .iter()
                .map(|b| {
                    (0..self.n)
                        .map(|r| (0..self.n).map(|c| [b[(r, c)].re, b[(r, c)].im]).collect())
                        .collect()
                })
                .collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SpectralDocument = serde_json::from_str(text)?;
        let grid = FrequencyGrid::new(doc.m)?;
        let mut values = Vec::with_capacity(doc.m);
        for bin in doc.values {
            if bin.len() != doc.n || bin.iter().any(|r| r.len() != doc.n) {
                return Err(Error::Format("bin shape does not match n".into()));
            }
            values.push(CMatrix::from_fn(doc.n, doc.n, |r, c| {
                Complex64::new(bin[r][c][0], bin[r][c][1])
            }));
        }
        Self::new(grid, values)
    }
}

#[derive(Serialize, Deserialize)]
struct SpectralDocument {
    n: usize,
    m: usize,
    values: Vec<Vec<Vec<[f64; 2]>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hann => (0..len)
                .map(|i| {
                    0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WelchConfig {
    /// Segment length; also the number of frequency bins of the estimate.
    pub segment_length: usize,
    pub overlap: f64,
    pub window: Window,
    /// Remove each channel's mean over the whole panel before segmenting.
    pub detrend: bool,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self { segment_length: 256, overlap: 0.5, window: Window::Hann, detrend: true }
    }
}

impl WelchConfig {
    pub fn with_segment_length(segment_length: usize) -> Self {
        Self { segment_length, ..Self::default() }
    }

    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.segment_length)
    }

    fn validate(&self) -> Result<usize> {
        self.grid()?;
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::InvalidConfig(format!(
                "overlap must lie in [0, 1), got {}",
                self.overlap
            )));
        }
        let step = ((self.segment_length as f64) * (1.0 - self.overlap)).round() as usize;
        Ok(step.max(1))
    }
}

fn parzen(x: f64) -> f64 {
    let a = x.abs();
    if a <= 0.5 {
        1.0 - 6.0 * a * a + 6.0 * a * a * a
    } else if a < 1.0 {
        2.0 * (1.0 - a).powi(3)
    } else {
        0.0
    }
}

const REDUCTION_LEAF: usize = 8;

/// Welch averaged cross-periodogram of all channel pairs.
///
/// Segment periodograms are summed by a fixed pairwise tree, so the result does not depend
/// on how the work is scheduled across threads.
pub fn estimate_csd(panel: &TimeSeriesPanel, cfg: &WelchConfig) -> Result<SpectralMatrix> {
    let step = cfg.validate()?;
    let grid = cfg.grid()?;
    let seg = cfg.segment_length;
    let (n, t) = (panel.n(), panel.len());
    if t < 2 * seg {
        return Err(Error::PanelTooShort { samples: t, required: 2 * seg });
    }
    for c in 0..n {
        if let Some(index) = panel.channel(c).iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { channel: c, index });
        }
    }
    let window = cfg.window.coefficients(seg);
    let power: f64 = window.iter().map(|w| w * w).sum();
    let segments = (t - seg) / step + 1;
    let bins = seg / 2 + 1;

    let means: Vec<f64> = (0..n)
        .map(|c| if cfg.detrend { panel.channel(c).iter().sum::<f64>() / t as f64 } else { 0.0 })
        .collect();

    let periodogram = |s: usize| -> Vec<Complex64> {
        let start = s * step;
        let spectra: Vec<Vec<Complex64>> = (0..n)
            .map(|c| {
                let x = &panel.channel(c)[start..start + seg];
                let mean = means[c];
                let mut buf: Vec<Complex64> = x
                    .iter()
                    .zip(&window)
                    .map(|(v, w)| Complex64::new((v - mean) * w, 0.0))
                    .collect();
                fourier::forward_in_place(&mut buf);
                buf
            })
            .collect();
        let mut acc = vec![Complex64::new(0.0, 0.0); bins * n * n];
        for k in 0..bins {
            for a in 0..n {
                let xa = spectra[a][k];
                for b in 0..n {
                    acc[(k * n + a) * n + b] = xa * spectra[b][k].conj();
                }
            }
        }
        acc
    };

    let total = tree_sum(0, segments, &periodogram);
    let scale = 1.0 / (segments as f64 * power);
    let half = (0..bins)
        .map(|k| {
            CMatrix::from_fn(n, n, |a, b| total[(k * n + a) * n + b] * scale)
        })
        .collect();
    SpectralMatrix::from_half_values(grid, n, half)
}

fn tree_sum<F>(lo: usize, hi: usize, leaf: &F) -> Vec<Complex64>
where
    F: Fn(usize) -> Vec<Complex64> + Sync,
{
    if hi - lo <= REDUCTION_LEAF {
        let mut acc = leaf(lo);
        for s in lo + 1..hi {
            for (a, b) in acc.iter_mut().zip(leaf(s)) {
                *a += b;
            }
        }
        return acc;
    }
    let mid = lo + (hi - lo) / 2;
    let (mut left, right) = rayon::join(|| tree_sum(lo, mid, leaf), || tree_sum(mid, hi, leaf));
    for (a, b) in left.iter_mut().zip(right) {
        *a += b;
    }
    left
}

/// Magnitude-squared coherence `|Phi_ij|^2 / (Phi_ii Phi_jj)` per bin, clamped to `[0, 1]`.
pub fn coherence(s: &SpectralMatrix, i: usize, j: usize) -> Result<Vec<f64>> {
    for &c in &[i, j] {
        if c >= s.n {
            return Err(Error::NodeOutOfRange { node: c, n: s.n });
        }
    }
    s.values
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let (pii, pjj) = (b[(i, i)].re, b[(j, j)].re);
            if pii <= 0.0 {
                return Err(Error::ZeroDiagonal { channel: i, bin: k });
            }
            if pjj <= 0.0 {
                return Err(Error::ZeroDiagonal { channel: j, bin: k });
            }
            Ok((b[(i, j)].norm_sqr() / (pii * pjj)).clamp(0.0, 1.0))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// 2-norm condition number per bin; `+inf` marks rank-deficient bins.
    pub per_bin: Vec<f64>,
    pub worst_bin: usize,
    pub worst: f64,
}

pub fn condition_report(s: &SpectralMatrix) -> ConditionReport {
    let per_bin: Vec<f64> = s.values.par_iter().map(linalg::condition_number).collect();
    let (worst_bin, worst) = per_bin
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, c)| if c > acc.1 { (k, c) } else { acc });
    ConditionReport { per_bin, worst_bin, worst }
}
