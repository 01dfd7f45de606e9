//! End-to-end runs: load or generate a model, obtain spectra (analytic or estimated from a
//! simulation), reconstruct the topology, evaluate against the truth and write a run directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{compare_edge_sets, DirectedGraph, EdgeMetrics, UndirectedGraph};
use crate::ldg::{self, LdgModel, ModelDocument, NoiseSpec, TimeSeriesPanel};
use crate::linalg;
use crate::lti::FrequencyGrid;
use crate::models::{self, RandomParams};
use crate::spectra::{estimate_csd, SpectralMatrix, WelchConfig};
use crate::wiener::{
    causal_rows, decide_edges, granger_rows, noncausal_rows, robust_detect, score_matrix,
    scores_to_csv, CausalConfig, EdgeDecision, FactorConfig, ThresholdRule, WienerMode, WienerRow,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Tail tolerance used by causal modes on analytic spectra.
pub const ORACLE_TAIL_TOL: f64 = 1e-6;

/// Causal-mode settings used when none are configured.
///
/// Estimated spectra carry lag content up to the grid's Nyquist lag, which no causal factor on
/// the grid reproduces, so they are smoothed (see [`prepare_spectra`]) and factored to looser
/// tolerances without the tail check.
pub fn causal_defaults(oracle: bool) -> CausalConfig {
    if oracle {
        CausalConfig { tail_tol: ORACLE_TAIL_TOL, ..CausalConfig::default() }
    } else {
        CausalConfig {
            factor: FactorConfig { tol: 1e-4, causal_tol: 1e-3, ..FactorConfig::default() },
            tail_tol: f64::INFINITY,
        }
    }
}

/// Applies the lag window causal modes use on estimated spectra; `Some(0)` disables it and
/// `None` picks a quarter of the grid.
pub fn prepare_spectra(
    s: &SpectralMatrix,
    mode: WienerMode,
    oracle: bool,
    lag_window: Option<usize>,
) -> Result<SpectralMatrix> {
    if oracle || mode == WienerMode::Noncausal {
        return Ok(s.clone());
    }
    match lag_window.unwrap_or((s.grid().len() / 4).max(1)) {
        0 => Ok(s.clone()),
        l => s.lag_window(l),
    }
}

fn default_fir_order() -> usize {
    5
}

/// Model generators selectable from configs and the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GenSpec {
    Ring {
        n: usize,
        #[serde(default = "default_fir_order")]
        fir_order: usize,
        #[serde(default)]
        seed: u64,
    },
    Tree {
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    Random {
        #[serde(flatten)]
        params: RandomParams,
        #[serde(default)]
        seed: u64,
    },
    Net24 {
        #[serde(default)]
        seed: u64,
    },
    Downstream,
    Upstream,
    Loop,
    Collider,
}

impl GenSpec {
    pub fn build(&self) -> Result<LdgModel> {
        match self {
            GenSpec::Ring { n, fir_order, seed } => models::ring(*n, *fir_order, *seed),
            GenSpec::Tree { n, seed } => models::tree(*n, *seed),
            GenSpec::Random { params, seed } => models::random(params, *seed),
            GenSpec::Net24 { seed } => models::net24(*seed),
            GenSpec::Downstream => Ok(models::downstream_cascade()),
            GenSpec::Upstream => Ok(models::upstream_cascade()),
            GenSpec::Loop => Ok(models::loop4()),
            GenSpec::Collider => Ok(models::collider()),
        }
    }
}

/// Reference graph for `assert_f1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    #[default]
    Kin,
    Topology,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Model file; relative paths are resolved against the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Inline model, filled in when a manifest is written.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_document: Option<ModelDocument>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenSpec>,
    pub samples: usize,
    pub seed: u64,
    /// Frequency bins; also the Welch segment length.
    pub grid: usize,
    pub welch: WelchConfig,
    pub mode: WienerMode,
    pub threshold: ThresholdRule,
    pub ridge: f64,
    /// Use the analytic spectra of the model instead of estimating them.
    pub oracle: bool,
    /// Observe the outputs through measurement noise and detect with the robustness bound.
    pub corrupt: bool,
    /// White measurement noise variance, overriding the model's own specification.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_variance: Option<f64>,
    /// Constant noise bound `D`; defaults to `||Phi_eta(w)||` of the model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_bound: Option<f64>,
    /// Causal-mode settings; defaults come from [`causal_defaults`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub causal: Option<CausalConfig>,
    /// Lag window for causal modes on estimated spectra, see [`prepare_spectra`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lag_window: Option<usize>,
    pub reference: Reference,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assert_f1: Option<f64>,
    pub dump_spectra: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            model: None,
            model_document: None,
            generate: None,
            samples: 1000,
            seed: 0,
            grid: crate::lti::DEFAULT_GRID,
            welch: WelchConfig::default(),
            mode: WienerMode::Noncausal,
            threshold: ThresholdRule::default(),
            ridge: 0.0,
            oracle: false,
            corrupt: false,
            eta_variance: None,
            noise_bound: None,
            causal: None,
            lag_window: None,
            reference: Reference::Kin,
            assert_f1: None,
            dump_spectra: false,
        }
    }
}

impl PipelineConfig {
    /// Reads a config file or a run manifest; model paths become relative to its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let mut cfg: Self = match value.get("config") {
            Some(inner) => serde_json::from_value(inner.clone())?,
            None => serde_json::from_value(value)?,
        };
        if let (Some(model), Some(dir)) = (&cfg.model, path.parent()) {
            if model.is_relative() {
                cfg.model = Some(dir.join(model));
            }
        }
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.grid)
    }

    pub fn welch(&self) -> WelchConfig {
        WelchConfig { segment_length: self.grid, ..self.welch }
    }

    pub fn causal_config(&self) -> CausalConfig {
        self.causal.unwrap_or_else(|| causal_defaults(self.oracle))
    }

    /// Inline document first, then the model file, then the generator.
    pub fn load_model(&self) -> Result<LdgModel> {
        let model = if let Some(doc) = &self.model_document {
            LdgModel::from_document(doc)?
        } else if let Some(path) = &self.model {
            LdgModel::from_json(&fs::read_to_string(path)?)?
        } else if let Some(spec) = &self.generate {
            spec.build()?
        } else {
            return Err(Error::InvalidConfig("no model, model_document or generate entry".into()));
        };
        match self.eta_variance {
            Some(v) => model.clone().with_measurement_noise(vec![NoiseSpec::white(v); model.n()]),
            None => Ok(model),
        }
    }

    fn check(&self, model: &LdgModel) -> Result<()> {
        self.grid()?;
        if self.corrupt && self.mode != WienerMode::Noncausal {
            return Err(Error::InvalidConfig("corrupted runs use the non-causal mode".into()));
        }
        if self.oracle && self.mode == WienerMode::Granger && !model.is_strictly_causal() {
            return Err(Error::InvalidConfig(
                "granger mode with analytic spectra requires a strictly causal model".into(),
            ));
        }
        if self.corrupt && model.measurement_noise().is_none() {
            return Err(Error::MissingMeasurementNoise);
        }
        Ok(())
    }
}

/// Spectra the reconstruction runs on: analytic, or Welch estimates of a simulated panel.
pub fn obtain_spectra(cfg: &PipelineConfig, model: &LdgModel) -> Result<SpectralMatrix> {
    let grid = cfg.grid()?;
    if cfg.oracle {
        let s = if cfg.corrupt { model.analytic_output_psd(grid) } else { model.analytic_psd(grid) };
        return s.map_err(|e| e.in_stage("spectra"));
    }
    let panel = simulate_panel(cfg, model)?;
    estimate_csd(&panel, &cfg.welch()).map_err(|e| e.in_stage("estimate"))
}

pub fn simulate_panel(cfg: &PipelineConfig, model: &LdgModel) -> Result<TimeSeriesPanel> {
    let panel = ldg::simulate(model, cfg.samples, cfg.seed).map_err(|e| e.in_stage("simulate"))?;
    if cfg.corrupt {
        return ldg::corrupt(&panel, model, cfg.seed).map_err(|e| e.in_stage("corrupt"));
    }
    Ok(panel)
}

/// Rows, decisions and the predicted graph of one reconstruction.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub rows: Vec<WienerRow>,
    pub decisions: Vec<EdgeDecision>,
    pub predicted: UndirectedGraph,
}

impl Reconstruction {
    pub fn scores(&self) -> Vec<Vec<f64>> {
        score_matrix(&self.rows)
    }
}

pub fn wiener_rows(
    s: &SpectralMatrix,
    mode: WienerMode,
    ridge: f64,
    causal: &CausalConfig,
) -> Result<Vec<WienerRow>> {
    match mode {
        WienerMode::Noncausal => noncausal_rows(s, ridge),
        WienerMode::Causal => causal_rows(&s.with_ridge(ridge), causal),
        WienerMode::Granger => granger_rows(&s.with_ridge(ridge), causal),
    }
}

/// For every node solve the Wiener problem, then threshold the rows into undirected edges.
pub fn reconstruct(
    s: &SpectralMatrix,
    mode: WienerMode,
    rule: ThresholdRule,
    ridge: f64,
    causal: &CausalConfig,
) -> Result<Reconstruction> {
    let rows = wiener_rows(s, mode, ridge, causal).map_err(|e| e.in_stage("wiener"))?;
    let (predicted, decisions) = decide_edges(&rows, rule).map_err(|e| e.in_stage("threshold"))?;
    Ok(Reconstruction { rows, decisions, predicted })
}

/// Non-causal rows on corrupted spectra, accepted only above the noise-explained bound.
pub fn reconstruct_corrupted(
    s_y: &SpectralMatrix,
    noise_bound: &[f64],
    ridge: f64,
) -> Result<Reconstruction> {
    let rows = noncausal_rows(s_y, ridge).map_err(|e| e.in_stage("wiener"))?;
    let (predicted, decisions) =
        robust_detect(s_y, noise_bound, &rows).map_err(|e| e.in_stage("robust"))?;
    Ok(Reconstruction { rows, decisions, predicted })
}

/// Per-bin `D(w)`: the configured constant, else the spectral norm of the model's `Phi_eta`.
pub fn noise_bound(cfg: &PipelineConfig, model: &LdgModel) -> Result<Vec<f64>> {
    let grid = cfg.grid()?;
    if let Some(d) = cfg.noise_bound {
        return Ok(vec![d; grid.len()]);
    }
    let eta = model.measurement_noise_psd(grid)?;
    Ok(eta.values().iter().map(linalg::spectral_norm).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub topology: EdgeMetrics,
    pub kin: EdgeMetrics,
}

impl EvalReport {
    pub fn reference(&self, r: Reference) -> &EdgeMetrics {
        match r {
            Reference::Kin => &self.kin,
            Reference::Topology => &self.topology,
        }
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>4} {:>4} {:>4} {:>9} {:>7} {:>7}\n",
            "reference", "tp", "fp", "fn", "precision", "recall", "f1"
        );
        for (name, m) in [("topology", &self.topology), ("kin", &self.kin)] {
            out.push_str(&format!(
                "{:<10} {:>4} {:>4} {:>4} {:>9.4} {:>7.4} {:>7.4}\n",
                name, m.true_positives, m.false_positives, m.false_negatives, m.precision, m.recall, m.f1
            ));
        }
        out
    }
}

/// Metrics of a predicted graph against the topology and the kin graph of the truth.
pub fn evaluate(predicted: &UndirectedGraph, truth: &DirectedGraph) -> Result<EvalReport> {
    Ok(EvalReport {
        topology: compare_edge_sets(predicted, &truth.topology())?,
        kin: compare_edge_sets(predicted, &truth.kin_graph())?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub n: usize,
    pub seed: u64,
    pub grid: usize,
    pub mode: WienerMode,
    pub threshold: ThresholdRule,
    pub oracle: bool,
    pub config: PipelineConfig,
}

impl Manifest {
    pub fn new(cfg: &PipelineConfig, model: &LdgModel) -> Self {
        let mut config = cfg.clone();
        config.model_document = Some(model.to_document());
        config.model = None;
        config.generate = None;
        config.eta_variance = None;
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: VERSION.to_string(),
            n: model.n(),
            seed: cfg.seed,
            grid: cfg.grid,
            mode: cfg.mode,
            threshold: cfg.threshold,
            oracle: cfg.oracle,
            config,
        }
    }
}

/// Everything a pipeline run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub model: LdgModel,
    pub spectra: SpectralMatrix,
    pub reconstruction: Reconstruction,
    pub eval: EvalReport,
    pub manifest: Manifest,
}

impl RunOutput {
    /// `Some(f1)` when an `assert_f1` threshold was requested and missed.
    pub fn failed_assertion(&self) -> Option<f64> {
        let f1 = self.eval.reference(self.manifest.config.reference).f1;
        match self.manifest.config.assert_f1 {
            Some(min) if f1 < min => Some(f1),
            _ => None,
        }
    }
}

/// Model, spectra, reconstruction and evaluation in one call.
pub fn run(cfg: &PipelineConfig) -> Result<RunOutput> {
    let model = cfg.load_model().map_err(|e| e.in_stage("model"))?;
    cfg.check(&model).map_err(|e| e.in_stage("config"))?;
    let spectra = obtain_spectra(cfg, &model)?;
    let reconstruction = if cfg.corrupt {
        let d = noise_bound(cfg, &model).map_err(|e| e.in_stage("robust"))?;
        reconstruct_corrupted(&spectra, &d, cfg.ridge)?
    } else {
        let s = prepare_spectra(&spectra, cfg.mode, cfg.oracle, cfg.lag_window)
            .map_err(|e| e.in_stage("spectra"))?;
        reconstruct(&s, cfg.mode, cfg.threshold, cfg.ridge, &cfg.causal_config())?
    };
    let eval = evaluate(&reconstruction.predicted, model.graph()).map_err(|e| e.in_stage("eval"))?;
    let manifest = Manifest::new(cfg, &model);
    Ok(RunOutput { model, spectra, reconstruction, eval, manifest })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Writes the predicted graph, scores and decisions of a reconstruction into `dir`.
pub fn write_reconstruction(
    dir: &Path,
    rec: &Reconstruction,
    labels: Option<&[String]>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("predicted.json"), rec.predicted.to_document().to_json() + "\n")?;
    fs::write(dir.join("predicted.dot"), rec.predicted.to_dot(labels))?;
    fs::write(dir.join("scores.csv"), scores_to_csv(&rec.scores()))?;
    write_json(&dir.join("decisions.json"), &rec.decisions)?;
    Ok(())
}

pub fn write_spectra(dir: &Path, s: &SpectralMatrix, rows: &[WienerRow]) -> Result<()> {
    s.write_binary(std::io::BufWriter::new(fs::File::create(dir.join("spectra.bin"))?))?;
    let docs: Vec<_> = rows.iter().map(WienerRow::to_document).collect();
    write_json(&dir.join("rows.json"), &docs)
}

/// Run directory layout: `manifest.json`, `predicted.json`, `predicted.dot`, `scores.csv`,
/// `decisions.json`, `metrics.json`, plus `spectra.bin` and `rows.json` when requested.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<()> {
    write_reconstruction(dir, &out.reconstruction, out.model.labels())?;
    write_json(&dir.join("manifest.json"), &out.manifest)?;
    write_json(&dir.join("metrics.json"), &out.eval)?;
    if out.manifest.config.dump_spectra {
        write_spectra(dir, &out.spectra, &out.reconstruction.rows)?;
    }
    Ok(())
}

/// Chooses the panel format by extension: `.bin` is binary, anything else CSV.
pub fn write_panel(path: &Path, panel: &TimeSeriesPanel) -> Result<()> {
    let w = std::io::BufWriter::new(fs::File::create(path)?);
    if path.extension().is_some_and(|e| e == "bin") {
        panel.write_binary(w)
    } else {
        panel.write_csv(w)
    }
}

pub fn read_panel(path: &Path) -> Result<TimeSeriesPanel> {
    let r = std::io::BufReader::new(fs::File::open(path)?);
    if path.extension().is_some_and(|e| e == "bin") {
        TimeSeriesPanel::read_binary(r)
    } else {
        TimeSeriesPanel::read_csv(r)
    }
}

/// Chooses the spectra format by extension: `.json` is JSON, anything else binary.
pub fn write_spectral_matrix(path: &Path, s: &SpectralMatrix) -> Result<()> {
    if path.extension().is_some_and(|e| e == "json") {
        fs::write(path, s.to_json()?)?;
        Ok(())
    } else {
        s.write_binary(std::io::BufWriter::new(fs::File::create(path)?))
    }
}

pub fn read_spectral_matrix(path: &Path) -> Result<SpectralMatrix> {
    if path.extension().is_some_and(|e| e == "json") {
        SpectralMatrix::from_json(&fs::read_to_string(path)?)
    } else {
        SpectralMatrix::read_binary(std::io::BufReader::new(fs::File::open(path)?))
    }
}

pub fn read_model(path: &Path) -> Result<LdgModel> {
    LdgModel::from_json(&fs::read_to_string(path)?)
}

pub fn default_output() -> PathBuf {
    PathBuf::from("run")
}
