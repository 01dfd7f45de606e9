use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use netid::error::{Error, Result};
use netid::graph::GraphDocument;
use netid::ldg::{self, Innovation};
use netid::models::{Causality, RandomParams};
use netid::pipeline::{self, GenSpec, PipelineConfig, Reference};
use netid::spectra::{estimate_csd, WelchConfig};
use netid::wiener::{ThresholdRule, WienerMode};

const EXIT_OTHER: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_ASSERT: u8 = 4;

#[derive(Parser)]
#[command(name = "netid", version, about = "Network topology reconstruction from cross-spectral densities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated model as JSON.
    Gen(GenArgs),
    /// Simulate a model and write the time series panel.
    Simulate(SimulateArgs),
    /// Estimate the cross-spectral density matrix of a panel.
    Estimate(EstimateArgs),
    /// Reconstruct the topology from a panel, a spectrum file or a model's analytic spectra.
    Reconstruct(ReconstructArgs),
    /// Compare a predicted graph with a model's topology and kin graph.
    Eval(EvalArgs),
    /// Model, spectra, reconstruction and evaluation in one run.
    Pipeline(PipelineArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Ring,
    Tree,
    Random,
    Net24,
    Downstream,
    Upstream,
    Loop,
    Collider,
}

#[derive(Clone, Copy, ValueEnum)]
enum CausalityArg {
    Strict,
    Causal,
    Noncausal,
}

#[derive(Args)]
struct GenArgs {
    kind: GenKind,
    #[arg(long, default_value_t = 15)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    fir_order: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Arc probability per node pair (random).
    #[arg(long, default_value_t = 0.3)]
    density: f64,
    #[arg(long, value_enum, default_value = "strict")]
    causality: CausalityArg,
    /// Add white measurement noise of this variance to every node.
    #[arg(long)]
    eta_variance: Option<f64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Add the model's measurement noise to the outputs.
    #[arg(long)]
    corrupt: bool,
    #[arg(long)]
    uniform: bool,
    /// `.bin` for the binary format, CSV otherwise.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    panel: PathBuf,
    #[arg(long, default_value_t = 256)]
    grid: usize,
    #[arg(long, default_value_t = 0.5)]
    overlap: f64,
    /// `.json` for JSON (n <= 8), binary otherwise.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Noncausal,
    Causal,
    Granger,
}

impl From<ModeArg> for WienerMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Noncausal => WienerMode::Noncausal,
            ModeArg::Causal => WienerMode::Causal,
            ModeArg::Granger => WienerMode::Granger,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Abs,
    Rel,
    Topk,
    Pcoh,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReferenceArg {
    Kin,
    Topology,
}

#[derive(Args, Default)]
struct DetectArgs {
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    threshold_rule: Option<RuleArg>,
    /// Threshold value; the count `k` for top-k.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    ridge: Option<f64>,
}

impl DetectArgs {
    fn apply(&self, cfg: &mut PipelineConfig) -> Result<()> {
        if let Some(m) = self.mode {
            cfg.mode = m.into();
        }
        if let Some(g) = self.grid {
            cfg.grid = g;
        }
        if let Some(r) = self.ridge {
            cfg.ridge = r;
        }
        let rule = self.threshold_rule.map(|r| match r {
            RuleArg::Abs => "abs",
            RuleArg::Rel => "rel",
            RuleArg::Topk => "topk",
            RuleArg::Pcoh => "pcoh",
        });
        cfg.threshold = match (rule, self.tau) {
            (None, None) => cfg.threshold,
            (Some(r), Some(t)) => ThresholdRule::parse(r, t)?,
            (Some(r), None) => ThresholdRule::parse(r, default_tau(r))?,
            (None, Some(t)) => with_tau(cfg.threshold, t)?,
        };
        Ok(())
    }
}

fn default_tau(rule: &str) -> f64 {
    match rule {
        "topk" => 2.0,
        "abs" => 1e-6,
        "pcoh" => 0.2,
        _ => 0.1,
    }
}

fn with_tau(rule: ThresholdRule, tau: f64) -> Result<ThresholdRule> {
    Ok(match rule {
        ThresholdRule::Absolute { .. } => ThresholdRule::Absolute { tau },
        ThresholdRule::Relative { .. } => ThresholdRule::Relative { tau },
        ThresholdRule::PartialCoherence { .. } => ThresholdRule::PartialCoherence { tau },
        ThresholdRule::TopK { .. } => ThresholdRule::parse("topk", tau)?,
    })
}

#[derive(Args)]
struct ReconstructArgs {
    /// Ground-truth model; required with `--oracle` and enables evaluation.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, conflicts_with = "spectra")]
    panel: Option<PathBuf>,
    #[arg(long)]
    spectra: Option<PathBuf>,
    #[arg(long)]
    oracle: bool,
    #[command(flatten)]
    detect: DetectArgs,
    /// Lag window for causal modes on estimated spectra; 0 disables smoothing.
    #[arg(long)]
    lag_window: Option<usize>,
    #[arg(long)]
    dump_spectra: bool,
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    predicted: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "kin")]
    reference: ReferenceArg,
    #[arg(long)]
    assert_f1: Option<f64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON config or a manifest of an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    corrupt: bool,
    #[arg(long)]
    eta_variance: Option<f64>,
    #[command(flatten)]
    detect: DetectArgs,
    #[arg(long, value_enum)]
    reference: Option<ReferenceArg>,
    #[arg(long)]
    assert_f1: Option<f64>,
    /// Lag window for causal modes on estimated spectra; 0 disables smoothing.
    #[arg(long)]
    lag_window: Option<usize>,
    #[arg(long)]
    dump_spectra: bool,
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

enum Failure {
    Error(Error),
    Assert { f1: f64, min: f64 },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn gen(args: &GenArgs) -> Result<()> {
    let spec = match args.kind {
        GenKind::Ring => GenSpec::Ring { n: args.n, fir_order: args.fir_order, seed: args.seed },
        GenKind::Tree => GenSpec::Tree { n: args.n, seed: args.seed },
        GenKind::Random => GenSpec::Random {
            params: RandomParams {
                n: args.n,
                density: args.density,
                causality: match args.causality {
                    CausalityArg::Strict => Causality::Strict,
                    CausalityArg::Causal => Causality::Causal,
                    CausalityArg::Noncausal => Causality::Noncausal,
                },
                ..RandomParams::default()
            },
            seed: args.seed,
        },
        GenKind::Net24 => GenSpec::Net24 { seed: args.seed },
        GenKind::Downstream => GenSpec::Downstream,
        GenKind::Upstream => GenSpec::Upstream,
        GenKind::Loop => GenSpec::Loop,
        GenKind::Collider => GenSpec::Collider,
    };
    let mut model = spec.build()?;
    if let Some(v) = args.eta_variance {
        model = model.clone().with_measurement_noise(vec![ldg::NoiseSpec::white(v); model.n()])?;
    }
    fs::write(&args.output, model.to_json() + "\n")?;
    println!(
        "wrote {} ({} nodes, {} arcs, self-kin: {})",
        args.output.display(),
        model.n(),
        model.graph().edge_count(),
        model.graph().is_self_kin()
    );
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let model = pipeline::read_model(&args.model)?;
    let innovation = if args.uniform { Innovation::Uniform } else { Innovation::Gaussian };
    let mut panel = ldg::simulate_with(&model, args.samples, args.seed, innovation)?;
    if args.corrupt {
        panel = ldg::corrupt(&panel, &model, args.seed)?;
    }
    pipeline::write_panel(&args.output, &panel)?;
    println!("wrote {} ({} channels, {} samples)", args.output.display(), panel.n(), panel.len());
    Ok(())
}

fn estimate(args: &EstimateArgs) -> Result<()> {
    let panel = pipeline::read_panel(&args.panel)?;
    let cfg = WelchConfig { overlap: args.overlap, ..WelchConfig::with_segment_length(args.grid) };
    let s = estimate_csd(&panel, &cfg)?;
    pipeline::write_spectral_matrix(&args.output, &s)?;
    println!("wrote {} ({} channels, {} bins)", args.output.display(), s.n(), s.grid().len());
    Ok(())
}

fn reconstruct(args: &ReconstructArgs) -> std::result::Result<(), Failure> {
    let mut cfg = PipelineConfig { oracle: args.oracle, ..PipelineConfig::default() };
    args.detect.apply(&mut cfg)?;
    let model = args.model.as_deref().map(pipeline::read_model).transpose()?;
    let spectra = if let Some(path) = &args.spectra {
        pipeline::read_spectral_matrix(path)?
    } else if let Some(path) = &args.panel {
        estimate_csd(&pipeline::read_panel(path)?, &cfg.welch())?
    } else if let (true, Some(m)) = (args.oracle, &model) {
        m.analytic_psd(cfg.grid()?)?
    } else {
        return Err(Error::InvalidConfig("need --panel, --spectra or --oracle with --model".into()).into());
    };
    let prepared = pipeline::prepare_spectra(&spectra, cfg.mode, args.oracle, args.lag_window)?;
    let causal = pipeline::causal_defaults(args.oracle);
    let rec = pipeline::reconstruct(&prepared, cfg.mode, cfg.threshold, cfg.ridge, &causal)?;
    pipeline::write_reconstruction(&args.out, &rec, model.as_ref().and_then(|m| m.labels()))?;
    if args.dump_spectra {
        pipeline::write_spectra(&args.out, &spectra, &rec.rows)?;
    }
    let manifest = serde_json::json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": pipeline::VERSION,
        "n": spectra.n(),
        "grid": spectra.grid().len(),
        "mode": cfg.mode,
        "threshold": cfg.threshold,
        "oracle": args.oracle,
        "ridge": cfg.ridge,
        "lag_window": args.lag_window,
        "inputs": {
            "model": args.model, "panel": args.panel, "spectra": args.spectra,
        },
    });
    fs::write(args.out.join("manifest.json"), serde_json::to_string_pretty(&manifest).map_err(Error::from)? + "\n")
        .map_err(Error::from)?;
    println!("predicted {} edges", rec.predicted.edge_count());
    if let Some(m) = &model {
        let eval = pipeline::evaluate(&rec.predicted, m.graph())?;
        fs::write(args.out.join("metrics.json"), serde_json::to_string_pretty(&eval).map_err(Error::from)? + "\n")
            .map_err(Error::from)?;
        print!("{}", eval.table());
    }
    Ok(())
}

fn eval(args: &EvalArgs) -> std::result::Result<(), Failure> {
    let doc = GraphDocument::from_json(&fs::read_to_string(&args.predicted).map_err(Error::from)?)?;
    let predicted = doc.into_graph()?.into_undirected();
    let model = pipeline::read_model(&args.model)?;
    let report = pipeline::evaluate(&predicted, model.graph())?;
    print!("{}", report.table());
    if let Some(path) = &args.output {
        fs::write(path, serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n").map_err(Error::from)?;
    }
    let reference = match args.reference {
        ReferenceArg::Kin => Reference::Kin,
        ReferenceArg::Topology => Reference::Topology,
    };
    check_f1(report.reference(reference).f1, args.assert_f1)
}

fn check_f1(f1: f64, min: Option<f64>) -> std::result::Result<(), Failure> {
    match min {
        Some(min) if f1 < min => Err(Failure::Assert { f1, min }),
        _ => Ok(()),
    }
}

fn run_pipeline(args: &PipelineArgs) -> std::result::Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(m) = &args.model {
        cfg.model = Some(m.clone());
        cfg.model_document = None;
        cfg.generate = None;
    }
    if let Some(t) = args.samples {
        cfg.samples = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.oracle |= args.oracle;
    cfg.corrupt |= args.corrupt;
    cfg.dump_spectra |= args.dump_spectra;
    if args.eta_variance.is_some() {
        cfg.eta_variance = args.eta_variance;
    }
    if let Some(r) = args.reference {
        cfg.reference = match r {
            ReferenceArg::Kin => Reference::Kin,
            ReferenceArg::Topology => Reference::Topology,
        };
    }
    if args.assert_f1.is_some() {
        cfg.assert_f1 = args.assert_f1;
    }
    if args.lag_window.is_some() {
        cfg.lag_window = args.lag_window;
    }
    args.detect.apply(&mut cfg)?;
    let out = pipeline::run(&cfg)?;
    pipeline::write_run(&args.out, &out)?;
    println!(
        "predicted {} edges; outputs in {}",
        out.reconstruction.predicted.edge_count(),
        args.out.display()
    );
    print!("{}", out.eval.table());
    check_f1(out.eval.reference(cfg.reference).f1, cfg.assert_f1)
}

fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_OTHER
    }
}

fn report(path_hint: Option<&Path>, failure: Failure) -> ExitCode {
    match failure {
        Failure::Error(e) => {
            match path_hint {
                Some(p) => eprintln!("error ({}): {e}", p.display()),
                None => eprintln!("error: {e}"),
            }
            ExitCode::from(exit_code(&e))
        }
        Failure::Assert { f1, min } => {
            eprintln!("f1 {f1:.4} is below the required {min:.4}");
            ExitCode::from(EXIT_ASSERT)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => gen(a).map_err(Failure::from),
        Command::Simulate(a) => simulate(a).map_err(Failure::from),
        Command::Estimate(a) => estimate(a).map_err(Failure::from),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Eval(a) => eval(a),
        Command::Pipeline(a) => run_pipeline(a),
    };
    let hint = match &cli.command {
        Command::Pipeline(a) => a.config.as_deref(),
        _ => None,
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(hint, f),
    }
}
