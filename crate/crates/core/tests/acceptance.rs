mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use common::{entry, grid, max_diff};
use nalgebra::DMatrix;
use netid::graph::KinClass;
use netid::ldg::{self, NoiseSpec};
use netid::linalg::CMatrix;
use netid::lti::FrequencyGrid;
use netid::models::{self, Causality};
use netid::pipeline::{self, GenSpec, PipelineConfig};
use netid::spectra::{estimate_csd, SpectralMatrix, WelchConfig};
use netid::wiener::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Writes straight to stderr so the line shows up even when the harness captures output.
fn report(id: usize, name: &str, elapsed: Duration, o: &Outcome) {
    let status = if o.pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {id} [{status}] {name} ({:.2} s): {}\n", elapsed.as_secs_f64(), o.detail);
    std::io::stderr().write_all(line.as_bytes()).unwrap();
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn worked_examples() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for ex in common::worked_examples(grid(256)) {
        pass &= ex.max_error < 1e-6 && ex.max_zero_norm < 1e-8;
        parts.push(format!("{} err {:.1e} zero {:.1e}", ex.name, ex.max_error, ex.max_zero_norm));
    }
    outcome(pass, parts.join(", "))
}

fn ring_config(samples: usize, seed: u64) -> PipelineConfig {
    PipelineConfig {
        generate: Some(GenSpec::Ring { n: 15, fir_order: 5, seed: 7 }),
        samples,
        seed,
        grid: 32,
        threshold: ThresholdRule::Relative { tau: 0.7 },
        ..PipelineConfig::default()
    }
}

fn ring15() -> Outcome {
    let oracle = PipelineConfig { oracle: true, grid: 256, threshold: ThresholdRule::default(), ..ring_config(0, 0) };
    let oracle_f1 = pipeline::run(&oracle).unwrap().eval.topology.f1;
    let f1s = |samples: usize| -> Vec<f64> {
        (1..=10).map(|seed| pipeline::run(&ring_config(samples, seed)).unwrap().eval.topology.f1).collect()
    };
    let mut short = f1s(1000);
    short.sort_by(f64::total_cmp);
    let median = (short[4] + short[5]) / 2.0;
    let long = f1s(20_000);
    let long_min = long.iter().copied().fold(1.0, f64::min);
    outcome(
        oracle_f1 == 1.0 && median >= 0.95 && long_min == 1.0,
        format!("oracle f1 {oracle_f1}, T=1000 median f1 {median:.3}, T=20000 min f1 {long_min:.3}"),
    )
}

fn net24() -> Outcome {
    let cfg = PipelineConfig {
        generate: Some(GenSpec::Net24 { seed: 24 }),
        oracle: true,
        grid: 256,
        threshold: ThresholdRule::Relative { tau: 1e-4 },
        ..PipelineConfig::default()
    };
    let out = pipeline::run(&cfg).unwrap();
    let graph = out.model.graph();
    let kin = graph.kin_graph();
    let fps = out.reconstruction.predicted.difference(&graph.topology());
    let coparents_only = fps.iter().all(|&(i, j)| graph.classify_kin(j, i).unwrap() == KinClass::ProperKin);
    outcome(
        out.reconstruction.predicted == kin && coparents_only && !graph.is_self_kin(),
        format!("{} edges, equals kin graph: {}, {} co-parent false positives", kin.edge_count(), out.reconstruction.predicted == kin, fps.len()),
    )
}

/// Largest norm among the entries each row must leave empty.
fn worst_off_support<F, G>(causality: Causality, m: usize, rows: F, support: G) -> f64
where
    F: Fn(&SpectralMatrix) -> Vec<WienerRow>,
    G: Fn(&netid::graph::DirectedGraph, usize, usize) -> bool,
{
    let mut worst: f64 = 0.0;
    for model in common::suite(causality) {
        let rows = rows(&model.analytic_psd(grid(m)).unwrap());
        for (j, row) in rows.iter().enumerate() {
            for &i in row.sources() {
                if !support(model.graph(), j, i) {
                    worst = worst.max(row.norm(i));
                }
            }
        }
    }
    worst
}

fn sparsity_suites() -> Outcome {
    let cfg = pipeline::causal_defaults(true);
    let kin = |g: &netid::graph::DirectedGraph, j: usize, i: usize| g.kins(j).unwrap().contains(&i);
    let noncausal = worst_off_support(Causality::Noncausal, 128, |s| noncausal_rows(s, 0.0).unwrap(), kin);
    let causal = worst_off_support(Causality::Causal, 256, |s| causal_rows(s, &cfg).unwrap(), kin);
    let granger = worst_off_support(
        Causality::Strict,
        256,
        |s| granger_rows(s, &cfg).unwrap(),
        |g, j, i| i == j || g.parents(j).unwrap().contains(&i),
    );
    outcome(
        noncausal < 1e-6 && causal < 5e-3 && granger < 5e-3,
        format!("off-support max norm: noncausal {noncausal:.1e}, causal {causal:.1e}, granger {granger:.1e}"),
    )
}

fn decomposition_identity() -> Outcome {
    let g = grid(64);
    let mut worst: f64 = 0.0;
    for causality in [Causality::Noncausal, Causality::Causal, Causality::Strict] {
        for model in common::suite(causality) {
            let s = model.analytic_psd(g).unwrap();
            for j in 0..model.n() {
                let parts = ckp_decomposition(&model, g, j).unwrap();
                let row = noncausal_wiener_row(&s, j, 0.0).unwrap();
                for &i in row.sources() {
                    worst = worst.max(max_diff(parts.total(i).values(), entry(&row, i)));
                }
            }
        }
    }
    outcome(worst < 1e-6, format!("max |W - (C + P + K)| {worst:.1e} over 60 models"))
}

fn inverse_psd_pattern() -> Outcome {
    let g = grid(64);
    let (mut mismatches, mut zeros) = (0, 0);
    for causality in [Causality::Noncausal, Causality::Causal, Causality::Strict] {
        for model in common::suite(causality) {
            let s = model.analytic_psd(g).unwrap();
            let inv = inverse_psd_kin_matrix(&s).unwrap();
            let rows = noncausal_rows(&s, 0.0).unwrap();
            for (j, row) in rows.iter().enumerate() {
                for &i in row.sources() {
                    let zero = row.norm(i) < 1e-6;
                    zeros += usize::from(zero);
                    mismatches += usize::from(zero != (inv[j][i] < 1e-6));
                }
            }
        }
    }
    outcome(mismatches == 0, format!("{mismatches} pattern mismatches, {zeros} zero entries"))
}

/// `Phi = B B* + 0.1 I` for a random causal FIR matrix `B` with three lags.
fn random_pd_spectrum(n: usize, g: FrequencyGrid, seed: u64) -> SpectralMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taps: Vec<DMatrix<f64>> =
        (0..3).map(|_| DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))).collect();
    let values = g
        .omegas()
        .map(|w| {
            let b = taps.iter().enumerate().fold(CMatrix::zeros(n, n), |acc, (l, t)| {
                acc + t.map(c) * Complex64::from_polar(1.0, -w * l as f64)
            });
            &b * b.adjoint() + CMatrix::identity(n, n) * c(0.1)
        })
        .collect();
    SpectralMatrix::new(g, values).unwrap()
}

fn factorization() -> Outcome {
    let cfg = FactorConfig::default();
    let (mut residual, mut anticausal): (f64, f64) = (0.0, 0.0);
    for seed in 0..20u64 {
        let s = random_pd_spectrum(1 + seed as usize % 6, grid(256), 500 + seed);
        let f = spectral_factorize(&s, &cfg).unwrap();
        residual = residual.max(f.residual);
        anticausal = anticausal.max(f.anticausal_energy).max(f.inverse_anticausal_energy);
    }
    let g = grid(64);
    let target: Vec<Complex64> = g.omegas().map(|w| c(1.0) + Complex64::from_polar(0.5, -w)).collect();
    let s = SpectralMatrix::new(g, target.iter().map(|t| CMatrix::from_element(1, 1, c(t.norm_sqr()))).collect())
        .unwrap();
    let scalar = [cepstral_factorize(&s, &cfg).unwrap(), wilson_factorize(&s, &cfg).unwrap()]
        .iter()
        .map(|f| max_diff(&f.values().iter().map(|v| v[(0, 0)]).collect::<Vec<_>>(), &target))
        .fold(0.0, f64::max);
    outcome(
        residual < 1e-8 && anticausal < 1e-6 && scalar < 1e-10,
        format!("residual {residual:.1e}, anticausal {anticausal:.1e}, scalar error {scalar:.1e}"),
    )
}

fn robustness() -> Outcome {
    let g = grid(64);
    let base = models::ring(4, 3, 2).unwrap();
    let (mut violations, mut valid_bins) = (0, 0);
    for sigma2 in [1e-4, 1e-2, 1e-1] {
        let model = base.clone().with_measurement_noise(vec![NoiseSpec::white(sigma2); 4]).unwrap();
        let s_x = model.analytic_psd(g).unwrap();
        let s_y = model.analytic_output_psd(g).unwrap();
        let eta = model.measurement_noise_psd(g).unwrap();
        for j in 0..4 {
            let clean = noncausal_wiener_row(&s_x, j, 0.0).unwrap();
            let noisy = noncausal_wiener_row(&s_y, j, 0.0).unwrap();
            let bound = robustness_bound(&s_y, &eta, j).unwrap();
            for (k, b) in bound.iter().enumerate().filter(|(_, b)| b.is_finite()) {
                valid_bins += 1;
                let d = clean
                    .sources()
                    .iter()
                    .map(|&i| (entry(&clean, i)[k] - entry(&noisy, i)[k]).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                violations += usize::from(d > *b);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut identity: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..7);
        let mut draw =
            || CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let q = draw() + CMatrix::identity(n, n) * c(3.0);
        let delta = draw() + CMatrix::identity(n, n) * c(2.0);
        let lhs = (&q + &delta).try_inverse().unwrap() - q.clone().try_inverse().unwrap();
        identity = identity.max((lhs - perturbed_inverse_difference(&q, &delta).unwrap()).norm());
    }
    outcome(
        violations == 0 && valid_bins > 0 && identity < 1e-10,
        format!("{violations} violations over {valid_bins} valid bins, inverse identity error {identity:.1e}"),
    )
}

fn welch_consistency() -> Outcome {
    let model = models::loop4();
    let cfg = WelchConfig::with_segment_length(64);
    let analytic = model.analytic_psd(cfg.grid().unwrap()).unwrap();
    let mut inversions = 0;
    let mut means = [0.0; 3];
    for seed in 0..5 {
        let errors: Vec<f64> = [2_000, 20_000, 200_000]
            .iter()
            .map(|&t| {
                let panel = ldg::simulate(&model, t, 40 + seed).unwrap();
                estimate_csd(&panel, &cfg).unwrap().mean_relative_error(&analytic).unwrap()
            })
            .collect();
        inversions += errors.windows(2).filter(|w| w[1] >= w[0]).count();
        for (m, e) in means.iter_mut().zip(&errors) {
            *m += e / 5.0;
        }
    }
    outcome(
        inversions <= 1,
        format!("{inversions} inversions, mean errors {:.3} / {:.3} / {:.3}", means[0], means[1], means[2]),
    )
}

/// Name, check and optional runtime limit.
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 9] = [
        ("worked examples", worked_examples, Some(Duration::from_secs(1))),
        ("ring-15 replication", ring15, Some(Duration::from_secs(30))),
        ("net-24 replication", net24, Some(Duration::from_secs(60))),
        ("sparsity suites", sparsity_suites, Some(Duration::from_secs(300))),
        ("decomposition identity", decomposition_identity, None),
        ("inverse-PSD pattern", inverse_psd_pattern, None),
        ("spectral factorization", factorization, None),
        ("robustness bound", robustness, None),
        ("Welch consistency", welch_consistency, None),
    ];
    let mut failed = Vec::new();
    for (id, (name, check, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let mut o = check();
        let elapsed = start.elapsed();
        if let Some(limit) = limit.filter(|l| elapsed > *l) {
            o.pass = false;
            o.detail.push_str(&format!(", exceeded {} s", limit.as_secs()));
        }
        report(id + 1, name, elapsed, &o);
        if !o.pass {
            failed.push(id + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
