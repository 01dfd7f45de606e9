use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{FrequencyGrid, FrequencyResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WienerMode {
    #[default]
    Noncausal,
    Causal,
    Granger,
}

impl std::str::FromStr for WienerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noncausal" => Ok(Self::Noncausal),
            "causal" => Ok(Self::Causal),
            "granger" => Ok(Self::Granger),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

/// Optimal linear estimator of node `target` from the signals listed in `sources`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerRow {
    target: usize,
    mode: WienerMode,
    sources: Vec<usize>,
    entries: Vec<FrequencyResponse>,
    norms: Vec<f64>,
    error_psd: Vec<f64>,
}

impl WienerRow {
    pub(crate) fn new(
        target: usize,
        mode: WienerMode,
        sources: Vec<usize>,
        entries: Vec<FrequencyResponse>,
        error_psd: Vec<f64>,
    ) -> Self {
        let norms = entries.iter().map(FrequencyResponse::l2_norm).collect();
        Self { target, mode, sources, entries, norms, error_psd }
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn mode(&self) -> WienerMode {
        self.mode
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn entries(&self) -> &[FrequencyResponse] {
        &self.entries
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Per-bin PSD of the estimation error `x_target - W x_sources`.
    pub fn error_psd(&self) -> &[f64] {
        &self.error_psd
    }

    pub fn grid(&self) -> Option<FrequencyGrid> {
        self.entries.first().map(FrequencyResponse::grid)
    }

    /// `W_{target, source}`, if `source` is an input of this row.
    pub fn entry(&self, source: usize) -> Option<&FrequencyResponse> {
        self.position(source).map(|p| &self.entries[p])
    }

    /// Norm of `W_{target, source}`; zero when `source` is not an input.
    pub fn norm(&self, source: usize) -> f64 {
        self.position(source).map_or(0.0, |p| self.norms[p])
    }

    /// Largest norm over sources other than the target itself.
    pub fn max_norm(&self) -> f64 {
        self.sources
            .iter()
            .zip(&self.norms)
            .filter(|(&s, _)| s != self.target)
            .fold(0.0, |a, (_, &v)| a.max(v))
    }

    fn position(&self, source: usize) -> Option<usize> {
        self.sources.iter().position(|&s| s == source)
    }

    pub fn to_document(&self) -> WienerRowDocument {
        WienerRowDocument {
            target: self.target,
            mode: self.mode,
            m: self.grid().map_or(0, |g| g.len()),
            sources: self.sources.clone(),
            norms: self.norms.clone(),
            error_psd: self.error_psd.clone(),
            entries: self
                .entries
                .iter()
                .map(|e| e.values().iter().map(|v| [v.re, v.im]).collect())
                .collect(),
        }
    }

    pub fn from_document(doc: &WienerRowDocument) -> Result<Self> {
        if doc.sources.len() != doc.entries.len() {
            return Err(Error::SizeMismatch { left: doc.sources.len(), right: doc.entries.len() });
        }
        let grid = FrequencyGrid::new(doc.m)?;
        let entries = doc
            .entries
            .iter()
            .map(|e| {
                let values = e.iter().map(|&[re, im]| num_complex::Complex64::new(re, im)).collect();
                FrequencyResponse::from_values(grid, values)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(doc.target, doc.mode, doc.sources.clone(), entries, doc.error_psd.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WienerRowDocument {
    pub target: usize,
    pub mode: WienerMode,
    pub m: usize,
    pub sources: Vec<usize>,
    pub norms: Vec<f64>,
    pub error_psd: Vec<f64>,
    /// Per source, the response at every bin as `[re, im]`.
    pub entries: Vec<Vec<[f64; 2]>>,
}
