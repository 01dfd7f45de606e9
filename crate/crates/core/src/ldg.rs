//! Linear dynamic graphs: `x = e + H(z) x` over a directed graph driven by mutually
//! uncorrelated node noises, optionally observed through additive measurement noise.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier;
use crate::graph::DirectedGraph;
use crate::linalg::CMatrix;
use crate::lti::{FrequencyGrid, TfSpec, TransferFunction, DEFAULT_MAX_TAPS};
use crate::spectra::SpectralMatrix;

/// Threshold on `min |det(I - H)|` over the grid below which a model is ill-posed.
pub const WELL_POSED_TOL: f64 = 1e-8;
/// Smallest admissible `|shaping(e^{iw})|` on the grid.
pub const DETECTABILITY_TOL: f64 = 1e-8;
/// Largest admissible anticausal energy fraction of `T = (I - H)^-1` for a causal model.
pub const CAUSALITY_TOL: f64 = 1e-6;
pub const MIN_BURN_IN: usize = 500;
/// Samples larger than this in magnitude abort a simulation.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

const LDGP_MAGIC: &[u8; 4] = b"LDGP";

/// Noise `e = shaping(z) w` with `w` white of the given variance, so
/// `Phi_e(w) = variance * |shaping(e^{iw})|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub shaping: TransferFunction,
    pub variance: f64,
}

impl NoiseSpec {
    pub fn white(variance: f64) -> Self {
        Self { shaping: TransferFunction::constant(1.0), variance }
    }

    pub fn new(shaping: TransferFunction, variance: f64) -> Result<Self> {
        let spec = Self { shaping, variance };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<()> {
        if !(self.variance > 0.0) || !self.variance.is_finite() {
            return Err(Error::InvalidModel(format!(
                "noise variance must be positive and finite, got {}",
                self.variance
            )));
        }
        if self.shaping.is_zero() || !self.shaping.is_causal() {
            return Err(Error::InvalidModel("noise shaping must be a nonzero causal filter".into()));
        }
        Ok(())
    }

    pub fn psd_at(&self, omega: f64) -> f64 {
        self.variance * self.shaping.eval(omega).norm_sqr()
    }

    pub fn psd(&self, grid: FrequencyGrid) -> Vec<f64> {
        grid.omegas().map(|w| self.psd_at(w)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Innovation {
    #[default]
    Gaussian,
    /// Zero-mean uniform with the requested variance.
    Uniform,
}

/// Graph, link transfer functions and node noises of a linear dynamic graph.
#[derive(Debug, Clone, PartialEq)]
pub struct LdgModel {
    graph: DirectedGraph,
    /// Keyed by arc `(from, to)`; the value is `H_{to,from}`.
    links: BTreeMap<(usize, usize), TransferFunction>,
    noise: Vec<NoiseSpec>,
    measurement_noise: Option<Vec<NoiseSpec>>,
    labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub well_posed: bool,
    pub min_det: f64,
    pub min_det_bin: usize,
    pub detectable: bool,
    pub causal: bool,
    pub strictly_causal: bool,
}

impl LdgModel {
    /// `links` maps arcs `(from, to)` to `H_{to,from}`.
    pub fn new<I>(n: usize, links: I, noise: Vec<NoiseSpec>) -> Result<Self>
    where
        I: IntoIterator<Item = ((usize, usize), TransferFunction)>,
    {
        let mut map = BTreeMap::new();
        for ((from, to), tf) in links {
            if tf.is_zero() {
                return Err(Error::InvalidModel(format!(
                    "arc {from}->{to} carries a zero transfer function"
                )));
            }
            if map.insert((from, to), tf).is_some() {
                return Err(Error::InvalidModel(format!("duplicate arc {from}->{to}")));
            }
        }
        let graph = DirectedGraph::from_edges_strict(n, map.keys().copied())?;
        if noise.len() != n {
            return Err(Error::InvalidModel(format!(
                "expected {n} noise specifications, got {}",
                noise.len()
            )));
        }
        for s in &noise {
            s.check()?;
        }
        Ok(Self { graph, links: map, noise, measurement_noise: None, labels: None })
    }

    pub fn with_measurement_noise(mut self, eta: Vec<NoiseSpec>) -> Result<Self> {
        if eta.len() != self.n() {
            return Err(Error::InvalidModel(format!(
                "expected {} measurement noise specifications, got {}",
                self.n(),
                eta.len()
            )));
        }
        for s in &eta {
            s.check()?;
        }
        self.measurement_noise = Some(eta);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::InvalidModel(format!(
                "expected {} labels, got {}",
                self.n(),
                labels.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// `H_{to,from}`, or `None` when the arc is absent.
    pub fn link(&self, from: usize, to: usize) -> Option<&TransferFunction> {
        self.links.get(&(from, to))
    }

    pub fn links(&self) -> impl Iterator<Item = ((usize, usize), &TransferFunction)> {
        self.links.iter().map(|(&k, v)| (k, v))
    }

    pub fn noise(&self) -> &[NoiseSpec] {
        &self.noise
    }

    pub fn measurement_noise(&self) -> Option<&[NoiseSpec]> {
        self.measurement_noise.as_deref()
    }

    pub fn is_strictly_causal(&self) -> bool {
        self.links.values().all(|tf| tf.is_strictly_causal())
    }

    /// `H(e^{iw})` with entry `(to, from)` set to the arc's response.
    pub fn transfer_matrix_at(&self, omega: f64) -> CMatrix {
        let n = self.n();
        let mut h = CMatrix::zeros(n, n);
        for (&(from, to), tf) in &self.links {
            h[(to, from)] = tf.eval(omega);
        }
        h
    }

    pub fn transfer_matrix(&self, grid: FrequencyGrid) -> Vec<CMatrix> {
        grid.omegas().map(|w| self.transfer_matrix_at(w)).collect()
    }

    /// Process-noise PSDs `Phi_e(w)` (diagonal entries).
    pub fn noise_psd_at(&self, omega: f64) -> Vec<f64> {
        self.noise.iter().map(|s| s.psd_at(omega)).collect()
    }

    pub fn validate(&self, grid: FrequencyGrid) -> Certificate {
        self.validate_with_tol(grid, WELL_POSED_TOL)
    }

    pub fn validate_with_tol(&self, grid: FrequencyGrid, det_tol: f64) -> Certificate {
        let n = self.n();
        let id = CMatrix::identity(n, n);
        let mut min_det = f64::INFINITY;
        let mut min_det_bin = 0;
        let mut inverses = Vec::with_capacity(grid.len());
        for (k, w) in grid.omegas().enumerate() {
            let a = &id - self.transfer_matrix_at(w);
            let det = a.determinant().norm();
            if det < min_det {
                min_det = det;
                min_det_bin = k;
            }
            inverses.push(a.try_inverse());
        }
        if n == 0 {
            min_det = 1.0;
        }
        let well_posed = min_det > det_tol && inverses.iter().all(Option::is_some);
        let detectable = self.noise.iter().all(|s| {
            s.variance > 0.0 && grid.omegas().all(|w| s.shaping.eval(w).norm() > DETECTABILITY_TOL)
        });
        let links_causal = self.links.values().all(TransferFunction::is_causal);
        let causal = links_causal
            && well_posed
            && {
                let inv: Vec<CMatrix> = inverses.into_iter().map(Option::unwrap).collect();
                let (mut anti, mut total) = (0.0, 0.0);
                for r in 0..n {
                    for c in 0..n {
                        let series: Vec<Complex64> = inv.iter().map(|t| t[(r, c)]).collect();
                        let taps = fourier::inverse(&series);
                        let m = taps.len();
                        total += taps.iter().map(|t| t.norm_sqr()).sum::<f64>();
                        anti += taps[m / 2..].iter().map(|t| t.norm_sqr()).sum::<f64>();
                    }
                }
                total == 0.0 || anti / total < CAUSALITY_TOL
            };
        Certificate {
            well_posed,
            min_det,
            min_det_bin,
            detectable,
            causal,
            strictly_causal: causal && self.is_strictly_causal(),
        }
    }

    /// `Phi_x = T Phi_e T*` with `T = (I - H)^-1`.
    pub fn analytic_psd(&self, grid: FrequencyGrid) -> Result<SpectralMatrix> {
        let n = self.n();
        SpectralMatrix::from_half_spectrum(grid, n, |k| {
            let w = grid.omega(k);
            let a = CMatrix::identity(n, n) - self.transfer_matrix_at(w);
            let det = a.determinant().norm();
            if n > 0 && det <= WELL_POSED_TOL {
                return Err(Error::IllPosed { min_det: det, bin: k });
            }
            let t = a.try_inverse().ok_or(Error::IllPosed { min_det: det, bin: k })?;
            let mut scaled = t.clone();
            for (c, p) in self.noise_psd_at(w).into_iter().enumerate() {
                scaled.column_mut(c).scale_mut(p);
            }
            Ok(scaled * t.adjoint())
        })
    }

    /// Diagonal measurement-noise PSD `Phi_eta`.
    pub fn measurement_noise_psd(&self, grid: FrequencyGrid) -> Result<SpectralMatrix> {
        let eta = self.measurement_noise.as_ref().ok_or(Error::MissingMeasurementNoise)?;
        let n = self.n();
        SpectralMatrix::from_half_spectrum(grid, n, |k| {
            let w = grid.omega(k);
            let mut d = CMatrix::zeros(n, n);
            for (j, s) in eta.iter().enumerate() {
                d[(j, j)] = Complex64::new(s.psd_at(w), 0.0);
            }
            Ok(d)
        })
    }

    /// `Phi_y = Phi_x + Phi_eta` of the corrupted outputs.
    pub fn analytic_output_psd(&self, grid: FrequencyGrid) -> Result<SpectralMatrix> {
        self.analytic_psd(grid)?.add(&self.measurement_noise_psd(grid)?)
    }

    /// Burn-in discarded by [`simulate`]: ten times the longest impulse-response support.
    pub fn burn_in(&self) -> usize {
        let links = self.links.values().map(TransferFunction::support);
        let shaping = self.noise.iter().map(|s| s.shaping.support());
        let longest = links.chain(shaping).max().unwrap_or(0);
        (10 * longest).max(MIN_BURN_IN)
    }

    pub fn to_document(&self) -> ModelDocument {
        let noise_doc = |s: &NoiseSpec| NoiseDocument {
            shaping: Some(TfSpec::from(&s.shaping)),
            variance: s.variance,
        };
        ModelDocument {
            n: self.n(),
            labels: self.labels.clone(),
            max_taps: None,
            edges: self
                .links
                .iter()
                .map(|(&(from, to), tf)| EdgeDocument { from, to, tf: TfSpec::from(tf) })
                .collect(),
            noise: self.noise.iter().map(noise_doc).collect(),
            measurement_noise: self
                .measurement_noise
                .as_ref()
                .map(|v| v.iter().map(noise_doc).collect()),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        let max_taps = doc.max_taps.unwrap_or(DEFAULT_MAX_TAPS);
        let noise_of = |d: &NoiseDocument| -> Result<NoiseSpec> {
            let shaping = match &d.shaping {
                Some(s) => s.to_transfer_function(max_taps)?,
                None => TransferFunction::constant(1.0),
            };
            NoiseSpec::new(shaping, d.variance)
        };
        let links = doc
            .edges
            .iter()
            .map(|e| Ok(((e.from, e.to), e.tf.to_transfer_function(max_taps)?)))
            .collect::<Result<Vec<_>>>()?;
        let noise = doc.noise.iter().map(noise_of).collect::<Result<Vec<_>>>()?;
        let mut model = Self::new(doc.n, links, noise)?;
        if let Some(eta) = &doc.measurement_noise {
            model = model.with_measurement_noise(eta.iter().map(noise_of).collect::<Result<_>>()?)?;
        }
        if let Some(labels) = &doc.labels {
            model = model.with_labels(labels.clone())?;
        }
        Ok(model)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDocument {
    pub from: usize,
    pub to: usize,
    pub tf: TfSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shaping: Option<TfSpec>,
    pub variance: f64,
}

/// JSON form of an [`LdgModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    /// Taps kept when expanding rational transfer functions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_taps: Option<usize>,
    pub edges: Vec<EdgeDocument>,
    pub noise: Vec<NoiseDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement_noise: Option<Vec<NoiseDocument>>,
}

/// `n` channels of `T` real samples, stored channel by channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    data: Vec<Vec<f64>>,
    seed: u64,
}

impl TimeSeriesPanel {
    pub fn new(data: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        if let Some(first) = data.first() {
            if let Some(bad) = data.iter().find(|c| c.len() != first.len()) {
                return Err(Error::SizeMismatch { left: first.len(), right: bad.len() });
            }
        }
        Ok(Self { data, seed })
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.data
    }

    pub fn scale(&self, c: f64) -> Self {
        let data = self.data.iter().map(|ch| ch.iter().map(|v| v * c).collect()).collect();
        Self { data, seed: self.seed }
    }

    /// Samples `[start, end)` of every channel.
    pub fn window(&self, start: usize, end: usize) -> Self {
        let data = self.data.iter().map(|ch| ch[start..end].to_vec()).collect();
        Self { data, seed: self.seed }
    }

    fn check_finite(&self) -> Result<()> {
        for (channel, ch) in self.data.iter().enumerate() {
            if let Some(index) = ch.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { channel, index });
            }
        }
        Ok(())
    }

    /// CSV with a header row `x0,...,x{n-1}` and one row per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.n()).map(|c| format!("x{c}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for t in 0..self.len() {
            let row: Vec<String> = self.data.iter().map(|ch| format!("{:e}", ch[t])).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))??;
        let n = header.split(',').count();
        let mut data = vec![Vec::new(); n];
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != n {
                return Err(Error::Format(format!("row {row} has {} fields, expected {n}", fields.len())));
            }
            for (c, f) in fields.iter().enumerate() {
                let v: f64 = f
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("row {row}: cannot parse {f:?}")))?;
                data[c].push(v);
            }
        }
        let panel = Self::new(data, 0)?;
        panel.check_finite()?;
        Ok(panel)
    }

    /// Binary layout: `"LDGP"`, `u32 n`, `u32 T`, 4 reserved zero bytes, then `T` rows of `n`
    /// little-endian `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(LDGP_MAGIC)?;
        w.write_all(&(self.n() as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        w.write_all(&[0u8; 4])?;
        for t in 0..self.len() {
            for ch in &self.data {
                w.write_all(&ch[t].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if &header[..4] != LDGP_MAGIC {
            return Err(Error::Format("not an LDGP panel".into()));
        }
        let n = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let t = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let mut data = vec![Vec::with_capacity(t); n];
        let mut f = [0u8; 8];
        for _ in 0..t {
            for ch in data.iter_mut() {
                r.read_exact(&mut f)?;
                ch.push(f64::from_le_bytes(f));
            }
        }
        let panel = Self::new(data, 0)?;
        panel.check_finite()?;
        Ok(panel)
    }
}

fn draw_white(rng: &mut ChaCha8Rng, variance: f64, len: usize, kind: Innovation) -> Vec<f64> {
    let sd = variance.sqrt();
    match kind {
        Innovation::Gaussian => {
            let d = Normal::new(0.0, sd).expect("finite standard deviation");
            (0..len).map(|_| d.sample(rng)).collect()
        }
        Innovation::Uniform => {
            let half = sd * 3f64.sqrt();
            let d = Uniform::new_inclusive(-half, half).expect("finite bounds");
            (0..len).map(|_| d.sample(rng)).collect()
        }
    }
}

/// Causal convolution of `w` with the taps of a causal filter.
fn filter_causal(tf: &TransferFunction, w: &[f64]) -> Vec<f64> {
    let offset = tf.offset().max(0) as usize;
    let taps = tf.taps();
    (0..w.len())
        .map(|t| {
            taps.iter()
                .enumerate()
                .filter_map(|(j, &h)| t.checked_sub(offset + j).map(|s| h * w[s]))
                .sum()
        })
        .collect()
}

fn shaped_noise(
    rng: &mut ChaCha8Rng,
    spec: &NoiseSpec,
    len: usize,
    kind: Innovation,
) -> Vec<f64> {
    let w = draw_white(rng, spec.variance, len, kind);
    if spec.shaping.taps() == [1.0] && spec.shaping.offset() == 0 {
        return w;
    }
    filter_causal(&spec.shaping, &w)
}

/// Simulates `T` samples after discarding [`LdgModel::burn_in`] samples.
pub fn simulate(model: &LdgModel, samples: usize, seed: u64) -> Result<TimeSeriesPanel> {
    simulate_with(model, samples, seed, Innovation::Gaussian)
}

pub fn simulate_with(
    model: &LdgModel,
    samples: usize,
    seed: u64,
    innovation: Innovation,
) -> Result<TimeSeriesPanel> {
    if !model.links.values().all(TransferFunction::is_causal) {
        return Err(Error::NonCausal);
    }
    let cert = model.validate(FrequencyGrid::default());
    if !cert.well_posed {
        return Err(Error::IllPosed { min_det: cert.min_det, bin: cert.min_det_bin });
    }
    if !cert.causal {
        return Err(Error::NonCausal);
    }
    let n = model.n();
    let burn = model.burn_in();
    let total = burn + samples;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let e: Vec<Vec<f64>> =
        model.noise.iter().map(|s| shaped_noise(&mut rng, s, total, innovation)).collect();

    // instantaneous part solved once, delayed part accumulated from the past
    let mut h0 = DMatrix::<f64>::identity(n, n);
    for (&(from, to), tf) in &model.links {
        h0[(to, from)] -= tf.tap(0);
    }
    let solve = h0
        .try_inverse()
        .ok_or(Error::IllPosed { min_det: 0.0, bin: 0 })?;
    let delayed: Vec<(usize, usize, Vec<(usize, f64)>)> = model
        .links
        .iter()
        .map(|(&(from, to), tf)| {
            let taps = tf
                .taps()
                .iter()
                .enumerate()
                .map(|(j, &h)| ((tf.offset() + j as i64) as usize, h))
                .filter(|&(lag, h)| lag >= 1 && h != 0.0)
                .collect();
            (from, to, taps)
        })
        .collect();

    let mut x = vec![vec![0.0; total]; n];
    let mut rhs = nalgebra::DVector::<f64>::zeros(n);
    for t in 0..total {
        for j in 0..n {
            rhs[j] = e[j][t];
        }
        for (from, to, taps) in &delayed {
            for &(lag, h) in taps {
                if lag <= t {
                    rhs[*to] += h * x[*from][t - lag];
                }
            }
        }
        let xt = &solve * &rhs;
        for j in 0..n {
            if !(xt[j].abs() <= DIVERGENCE_LIMIT) {
                return Err(Error::Diverged(t));
            }
            x[j][t] = xt[j];
        }
    }
    let data = x.into_iter().map(|ch| ch[burn..].to_vec()).collect();
    TimeSeriesPanel::new(data, seed)
}

/// `y_j = x_j + eta_j` with `eta` drawn from an RNG stream independent of the process noise.
pub fn corrupt(panel: &TimeSeriesPanel, model: &LdgModel, seed: u64) -> Result<TimeSeriesPanel> {
    corrupt_with(panel, model, seed, false)
}

/// With `bypass` set the panel is returned unchanged.
pub fn corrupt_with(
    panel: &TimeSeriesPanel,
    model: &LdgModel,
    seed: u64,
    bypass: bool,
) -> Result<TimeSeriesPanel> {
    if panel.n() != model.n() {
        return Err(Error::SizeMismatch { left: panel.n(), right: model.n() });
    }
    if bypass {
        return Ok(panel.clone());
    }
    let eta = model.measurement_noise().ok_or(Error::MissingMeasurementNoise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let data = panel
        .channels()
        .iter()
        .zip(eta)
        .map(|(x, spec)| {
            let pad = (10 * spec.shaping.support()).max(MIN_BURN_IN);
            let noise = shaped_noise(&mut rng, spec, pad + x.len(), Innovation::Gaussian);
            x.iter().zip(&noise[pad..]).map(|(a, b)| a + b).collect()
        })
        .collect();
    TimeSeriesPanel::new(data, panel.seed())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> FrequencyGrid {
        FrequencyGrid::new(64).unwrap()
    }

    fn white(n: usize) -> Vec<NoiseSpec> {
        vec![NoiseSpec::white(1.0); n]
    }

    #[test]
    fn structural_errors() {
        assert!(LdgModel::new(2, [((0, 1), TransferFunction::zero())], white(2)).is_err());
        assert!(LdgModel::new(2, [((0, 1), TransferFunction::constant(0.5))], white(1)).is_err());
        let anti = [((0, 1), TransferFunction::constant(0.5)), ((1, 0), TransferFunction::constant(0.5))];
        assert!(LdgModel::new(2, anti, white(2)).is_err());
        assert!(NoiseSpec::new(TransferFunction::constant(1.0), 0.0).is_err());
        assert!(NoiseSpec::new(TransferFunction::delay(-1, 1.0), 1.0).is_err());
    }

    #[test]
    fn validate_examples() {
        let empty = LdgModel::new(3, [], white(3)).unwrap();
        let c = empty.validate(grid());
        assert!(c.well_posed && c.detectable && c.causal);
        assert!((c.min_det - 1.0).abs() < 1e-15);

        let arc = LdgModel::new(2, [((0, 1), TransferFunction::delay(1, 0.5))], white(2)).unwrap();
        let c = arc.validate(grid());
        assert!(c.well_posed && c.causal && c.strictly_causal);

        // ring with |H| < 1/n everywhere: I - H is diagonally dominant
        let n = 5;
        let ring = LdgModel::new(
            n,
            (0..n).map(|i| ((i, (i + 1) % n), TransferFunction::new(vec![0.1, 0.05], 1))),
            white(n),
        )
        .unwrap();
        assert!(ring.links().all(|(_, tf)| tf.l1_gain() < 1.0 / n as f64));
        assert!(ring.validate(grid()).well_posed);

        // two-node loop with unit gain at w = 0 is singular there
        let bad = LdgModel::new(
            3,
            [
                ((0, 1), TransferFunction::constant(1.0)),
                ((1, 2), TransferFunction::constant(1.0)),
                ((2, 0), TransferFunction::constant(1.0)),
            ],
            white(3),
        )
        .unwrap();
        let c = bad.validate(grid());
        assert!(!c.well_posed);
        assert!(bad.analytic_psd(grid()).is_err());

        // noise shaping with a zero at w = pi is not detectable
        let notch = LdgModel::new(
            1,
            [],
            vec![NoiseSpec::new(TransferFunction::new(vec![1.0, 1.0], 0), 1.0).unwrap()],
        )
        .unwrap();
        assert!(!notch.validate(grid()).detectable);

        // loop gain 3 z^-3: well-posed on the circle but T is not causal
        let loop2 = LdgModel::new(
            3,
            [
                ((0, 1), TransferFunction::delay(1, 2.0)),
                ((1, 2), TransferFunction::delay(1, 1.5)),
                ((2, 0), TransferFunction::delay(1, 1.0)),
            ],
            white(3),
        )
        .unwrap();
        let c = loop2.validate(grid());
        assert!(c.well_posed);
        assert!(!c.causal);
        assert!(matches!(simulate(&loop2, 1000, 1), Err(Error::NonCausal)));
    }

    #[test]
    fn analytic_psd_examples() {
        let empty = LdgModel::new(3, [], white(3)).unwrap();
        let s = empty.analytic_psd(grid()).unwrap();
        for b in s.values() {
            assert!((b - CMatrix::identity(3, 3)).norm() < 1e-15);
        }
        // x1 = H10 x0 + e1: Phi_x1 = |H10|^2 Phi_x0 + Phi_e1
        let h = TransferFunction::new(vec![0.7, -0.2], 1);
        let m = LdgModel::new(
            2,
            [((0, 1), h.clone())],
            vec![NoiseSpec::white(2.0), NoiseSpec::white(0.5)],
        )
        .unwrap();
        let s = m.analytic_psd(grid()).unwrap();
        for (k, b) in s.values().iter().enumerate() {
            let hv = h.eval(grid().omega(k));
            let expected = hv.norm_sqr() * 2.0 + 0.5;
            assert!((b[(1, 1)].re - expected).abs() < 1e-12);
            assert!((b[(1, 0)] - hv * 2.0).norm() < 1e-12);
        }
        assert!(s.hermitian_defect() < 1e-15);
    }

    #[test]
    fn simulation_is_deterministic() {
        let m = LdgModel::new(2, [((0, 1), TransferFunction::delay(1, 0.9))], white(2)).unwrap();
        let a = simulate(&m, 2000, 42).unwrap();
        let b = simulate(&m, 2000, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate(&m, 2000, 43).unwrap());
        assert_eq!(a.len(), 2000);
        assert_eq!(a.seed(), 42);
    }

    #[test]
    fn non_causal_models_cannot_be_simulated() {
        let m = LdgModel::new(2, [((0, 1), TransferFunction::delay(-1, 0.5))], white(2)).unwrap();
        assert!(matches!(simulate(&m, 1000, 0), Err(Error::NonCausal)));
        assert!(m.analytic_psd(grid()).is_ok());
    }

    #[test]
    fn corrupt_requires_noise_spec() {
        let m = LdgModel::new(1, [], white(1)).unwrap();
        let p = simulate(&m, 600, 1).unwrap();
        assert!(matches!(corrupt(&p, &m, 2), Err(Error::MissingMeasurementNoise)));
        assert_eq!(corrupt_with(&p, &m, 2, true).unwrap(), p);
    }

    #[test]
    fn model_json_roundtrip() {
        let m = LdgModel::new(
            3,
            [((0, 1), TransferFunction::new(vec![0.5, 0.2], 1)), ((2, 1), TransferFunction::delay(-1, 0.3))],
            vec![
                NoiseSpec::white(1.0),
                NoiseSpec::new(TransferFunction::new(vec![1.0, 0.4], 0), 0.5).unwrap(),
                NoiseSpec::white(2.0),
            ],
        )
        .unwrap()
        .with_measurement_noise(white(3))
        .unwrap();
        assert_eq!(LdgModel::from_json(&m.to_json()).unwrap(), m);

        let text = r#"{"n": 2, "edges": [{"from": 0, "to": 1, "tf": {"num": [0.0, 1.0], "den": [1.0, -0.5]}}],
                       "noise": [{"variance": 1.0}, {"shaping": {"taps": [1.0]}, "variance": 2.0}]}"#;
        let m = LdgModel::from_json(text).unwrap();
        assert!((m.link(0, 1).unwrap().tap(3) - 0.25).abs() < 1e-15);
        let bad = r#"{"n": 2, "edges": [{"from": 0, "to": 1, "tf": {"num": [1.0], "den": [1.0, -1.2]}}],
                       "noise": [{"variance": 1.0}, {"variance": 1.0}]}"#;
        assert!(LdgModel::from_json(bad).is_err());
    }

    #[test]
    fn panel_formats() {
        let p = TimeSeriesPanel::new(vec![vec![1.0, -2.5, 3.25], vec![0.0, 1e-3, 7.0]], 0).unwrap();
        let mut csv = Vec::new();
        p.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8_lossy(&csv).starts_with("x0,x1\n"));
        assert_eq!(TimeSeriesPanel::read_csv(csv.as_slice()).unwrap(), p);
        let mut bin = Vec::new();
        p.write_binary(&mut bin).unwrap();
        assert_eq!(&bin[..4], b"LDGP");
        assert_eq!(bin.len(), 16 + 6 * 8);
        assert_eq!(TimeSeriesPanel::read_binary(bin.as_slice()).unwrap(), p);
        assert!(TimeSeriesPanel::new(vec![vec![1.0], vec![1.0, 2.0]], 0).is_err());
    }
}
