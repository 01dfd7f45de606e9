//! Discrete-time transfer functions and their sampled frequency responses.
//!
//! A [`TransferFunction`] is a finite two-sided impulse response `H(z) = sum_k h_k z^-k`
//! (a Laurent polynomial). Rational specifications are expanded into this form when loaded.
//! Spectral algebra happens on a [`FrequencyGrid`] of `m` uniform bins over `[0, 2 pi)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier;

/// Default number of taps kept on each side when expanding rational transfer functions.
pub const DEFAULT_MAX_TAPS: usize = 64;
/// Largest discarded tap magnitude allowed when truncating a rational expansion.
pub const EXPANSION_TAIL_TOL: f64 = 1e-10;
pub const DEFAULT_GRID: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FrequencyGrid {
    m: usize,
}

impl FrequencyGrid {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 || !m.is_multiple_of(2) {
            return Err(Error::InvalidGrid(m));
        }
        Ok(Self { m })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn omega(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.m as f64
    }

    pub fn omegas(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.m).map(|k| self.omega(k))
    }

    /// Bin paired with `k` under conjugation (`m - k`, with 0 mapped to itself).
    pub fn mirror(&self, k: usize) -> usize {
        (self.m - k) % self.m
    }

    pub fn check_same(&self, other: &FrequencyGrid) -> Result<()> {
        if self.m != other.m {
            return Err(Error::GridMismatch { left: self.m, right: other.m });
        }
        Ok(())
    }
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self { m: DEFAULT_GRID }
    }
}

impl TryFrom<usize> for FrequencyGrid {
    type Error = Error;
    fn try_from(m: usize) -> Result<Self> {
        Self::new(m)
    }
}

impl From<FrequencyGrid> for usize {
    fn from(g: FrequencyGrid) -> usize {
        g.m
    }
}

/// `H(z) = sum_j taps[j] z^-(offset + j)`, kept trimmed of leading and trailing zeros.
/// The zero function has no taps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransferFunction {
    taps: Vec<f64>,
    offset: i64,
}

impl TransferFunction {
    pub fn new(taps: Vec<f64>, offset: i64) -> Self {
        let mut tf = Self { taps, offset };
        tf.canonicalize();
        tf
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c], 0)
    }

    /// `gain * z^-lag`; a negative lag is an advance.
    pub fn delay(lag: i64, gain: f64) -> Self {
        Self::new(vec![gain], lag)
    }

    fn canonicalize(&mut self) {
        let first = self.taps.iter().position(|&t| t != 0.0);
        match first {
            None => {
                self.taps.clear();
                self.offset = 0;
            }
            Some(f) => {
                let last = self.taps.iter().rposition(|&t| t != 0.0).unwrap();
                self.taps = self.taps[f..=last].to_vec();
                self.offset += f as i64;
            }
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn is_zero(&self) -> bool {
        self.taps.is_empty()
    }

    /// Lowest power of `z^-1` carried by a nonzero tap.
    pub fn first_lag(&self) -> Option<i64> {
        (!self.is_zero()).then_some(self.offset)
    }

    /// Highest power of `z^-1` carried by a nonzero tap.
    pub fn last_lag(&self) -> Option<i64> {
        (!self.is_zero()).then(|| self.offset + self.taps.len() as i64 - 1)
    }

    pub fn is_causal(&self) -> bool {
        self.first_lag().is_none_or(|l| l >= 0)
    }

    pub fn is_strictly_causal(&self) -> bool {
        self.first_lag().is_none_or(|l| l >= 1)
    }

    /// Number of lags spanned, counted from lag zero for causal filters.
    pub fn support(&self) -> usize {
        match (self.first_lag(), self.last_lag()) {
            (Some(a), Some(b)) => (b.max(0) - a.min(0) + 1) as usize,
            _ => 0,
        }
    }

    /// Coefficient of `z^-lag`.
    pub fn tap(&self, lag: i64) -> f64 {
        let idx = lag - self.offset;
        if idx < 0 {
            return 0.0;
        }
        self.taps.get(idx as usize).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, omega: f64) -> Complex64 {
        self.taps
            .iter()
            .enumerate()
            .map(|(j, &h)| h * Complex64::from_polar(1.0, -omega * (self.offset + j as i64) as f64))
            .sum()
    }

    pub fn freq_response(&self, grid: FrequencyGrid) -> FrequencyResponse {
        let values = (0..grid.len()).map(|k| self.eval(grid.omega(k))).collect();
        FrequencyResponse { grid, values }
    }

    /// Keeps only the taps with nonnegative powers of `z^-1`.
    pub fn causal_truncation(&self) -> Self {
        if self.offset >= 0 {
            return self.clone();
        }
        let skip = (-self.offset) as usize;
        if skip >= self.taps.len() {
            return Self::zero();
        }
        Self::new(self.taps[skip..].to_vec(), 0)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(self.taps.iter().map(|t| t * c).collect(), self.offset)
    }

    pub fn add(&self, other: &Self) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        let lo = self.offset.min(other.offset);
        let hi = self.last_lag().unwrap().max(other.last_lag().unwrap());
        let taps = (lo..=hi).map(|l| self.tap(l) + other.tap(l)).collect();
        Self::new(taps, lo)
    }

    /// Cascade (polynomial product).
    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut taps = vec![0.0; self.taps.len() + other.taps.len() - 1];
        for (a, x) in self.taps.iter().enumerate() {
            for (b, y) in other.taps.iter().enumerate() {
                taps[a + b] += x * y;
            }
        }
        Self::new(taps, self.offset + other.offset)
    }

    /// Para-Hermitian conjugate `H(1/z)`: time reversal of the impulse response.
    pub fn adjoint(&self) -> Self {
        match self.last_lag() {
            None => Self::zero(),
            Some(last) => {
                let taps = self.taps.iter().rev().copied().collect();
                Self::new(taps, -last)
            }
        }
    }

    /// Sum of absolute taps, an upper bound of `|H(e^{iw})|`.
    pub fn l1_gain(&self) -> f64 {
        self.taps.iter().map(|t| t.abs()).sum()
    }

    /// Expands the causal rational `num(z^-1) / den(z^-1)` into at most `max_taps` taps.
    ///
    /// The denominator must have all roots strictly inside the unit disk and the discarded
    /// tail must stay below [`EXPANSION_TAIL_TOL`].
    pub fn from_rational(num: &[f64], den: &[f64], max_taps: usize) -> Result<Self> {
        let den = trim_trailing(den);
        if den.is_empty() || den[0] == 0.0 {
            return Err(Error::InvalidTransferFunction(
                "denominator must have a nonzero leading coefficient".into(),
            ));
        }
        if !schur_cohn_stable(den) {
            return Err(Error::InvalidTransferFunction(format!(
                "denominator {den:?} has roots on or outside the unit circle"
            )));
        }
        let total = 2 * max_taps.max(num.len());
        let mut h = vec![0.0; total];
        for k in 0..total {
            let mut acc = num.get(k).copied().unwrap_or(0.0);
            for i in 1..den.len().min(k + 1) {
                acc -= den[i] * h[k - i];
            }
            h[k] = acc / den[0];
        }
        let keep = max_taps.max(num.len());
        let tail = h[keep..].iter().fold(0.0f64, |a, &t| a.max(t.abs()));
        if tail > EXPANSION_TAIL_TOL {
            return Err(Error::InvalidTransferFunction(format!(
                "impulse response tail {tail:e} exceeds {EXPANSION_TAIL_TOL:e} after {keep} taps; poles too close to the unit circle"
            )));
        }
        h.truncate(keep);
        Ok(Self::new(h, 0))
    }
}

fn trim_trailing(v: &[f64]) -> &[f64] {
    let end = v.iter().rposition(|&x| x != 0.0).map_or(0, |p| p + 1);
    &v[..end]
}

/// Step-down test: all roots of `a_0 + a_1 z^-1 + ... + a_p z^-p` lie strictly inside the unit
/// circle iff every reflection coefficient has modulus below one.
pub fn schur_cohn_stable(den: &[f64]) -> bool {
    let den = trim_trailing(den);
    if den.is_empty() || den[0] == 0.0 {
        return false;
    }
    let mut a: Vec<f64> = den.iter().map(|x| x / den[0]).collect();
    while a.len() > 1 {
        let p = a.len() - 1;
        let k = a[p];
        if k.abs() >= 1.0 {
            return false;
        }
        let d = 1.0 - k * k;
        a = (0..p).map(|i| (a[i] - k * a[p - i]) / d).collect();
    }
    true
}

/// Transfer function as written in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TfSpec {
    Taps {
        taps: Vec<f64>,
        #[serde(default)]
        offset: i64,
    },
    Rational { num: Vec<f64>, den: Vec<f64> },
}

impl TfSpec {
    pub fn to_transfer_function(&self, max_taps: usize) -> Result<TransferFunction> {
        match self {
            TfSpec::Taps { taps, offset } => {
                if taps.iter().any(|t| !t.is_finite()) {
                    return Err(Error::InvalidTransferFunction("non-finite tap".into()));
                }
                Ok(TransferFunction::new(taps.clone(), *offset))
            }
            TfSpec::Rational { num, den } => TransferFunction::from_rational(num, den, max_taps),
        }
    }
}

impl From<&TransferFunction> for TfSpec {
    fn from(tf: &TransferFunction) -> Self {
        TfSpec::Taps { taps: tf.taps.clone(), offset: tf.offset }
    }
}

/// Samples `H(e^{i w_k})` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    grid: FrequencyGrid,
    values: Vec<Complex64>,
}

impl FrequencyResponse {
    pub fn from_values(grid: FrequencyGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch { left: grid.len(), right: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: FrequencyGrid) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn constant(grid: FrequencyGrid, c: Complex64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    /// Response of a circular impulse response indexed by lag modulo `m`.
    pub fn from_circular_taps(grid: FrequencyGrid, taps: &[Complex64]) -> Result<Self> {
        if taps.len() != grid.len() {
            return Err(Error::GridMismatch { left: grid.len(), right: taps.len() });
        }
        Ok(Self { grid, values: fourier::forward(taps) })
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    fn zip_with(
        &self,
        other: &Self,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a / b)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| v * c).collect() }
    }

    /// `H*(e^{iw}) = conj(H(e^{iw}))` on the unit circle.
    pub fn conjugate(&self) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| v.conj()).collect() }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Discrete L2 norm `sqrt(mean_k |H(w_k)|^2)`.
    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.norm()))
    }

    /// Impulse response on the circular lag axis (index `k` carries lag `signed_lag(k, m)`).
    pub fn circular_taps(&self) -> Vec<Complex64> {
        fourier::inverse(&self.values)
    }

    /// Fraction of impulse-response energy on negative lags `[-m/2, -1]`.
    pub fn anticausal_energy_fraction(&self) -> f64 {
        anticausal_energy_fraction(&self.circular_taps())
    }

    /// Tap-domain causal truncation on the grid.
    pub fn causal_truncation(&self) -> Self {
        let mut taps = self.circular_taps();
        zero_negative_lags(&mut taps);
        Self { grid: self.grid, values: fourier::forward(&taps) }
    }
}

pub fn l2_norm(values: &[Complex64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v.norm_sqr()).sum::<f64>() / values.len() as f64).sqrt()
}

/// Zeroes circular positions `m/2..m`, the negative lags.
pub fn zero_negative_lags(taps: &mut [Complex64]) {
    let m = taps.len();
    for t in &mut taps[m / 2..] {
        *t = Complex64::new(0.0, 0.0);
    }
}

pub fn anticausal_energy_fraction(taps: &[Complex64]) -> f64 {
    let m = taps.len();
    let total: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    taps[m / 2..].iter().map(|t| t.norm_sqr()).sum::<f64>() / total
}

/// Fraction of energy on lags with `|lag| > m/4`.
pub fn tail_energy_fraction(taps: &[Complex64]) -> f64 {
    let m = taps.len();
    let total: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let tail: f64 = taps
        .iter()
        .enumerate()
        .filter(|(k, _)| fourier::signed_lag(*k, m).unsigned_abs() as usize > m / 4)
        .map(|(_, t)| t.norm_sqr())
        .sum();
    tail / total
}
