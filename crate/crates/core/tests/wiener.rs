mod common;

use common::{entry, grid, link, max_diff};
use nalgebra::DMatrix;
use netid::graph::{DirectedGraph, UndirectedGraph};
use netid::ldg::{self, LdgModel, NoiseSpec};
use netid::linalg::CMatrix;
use netid::lti::{FrequencyGrid, TransferFunction};
use netid::models::{self, Causality};
use netid::spectra::SpectralMatrix;
use netid::wiener::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn white(n: usize) -> Vec<NoiseSpec> {
    vec![NoiseSpec::white(1.0); n]
}

fn psd(model: &LdgModel, m: usize) -> SpectralMatrix {
    model.analytic_psd(grid(m)).unwrap()
}

/// The 3-node instance whose arc 0 -> 2 is invisible to the filter: with `a = 0.5 z^-1`
/// (0 -> 1), `c = 0.4 z^-1` (2 -> 1) and `b = 0.2` (0 -> 2) the child and kin contributions of
/// node 1 cancel the direct link exactly.
fn cancellation_instance() -> LdgModel {
    LdgModel::new(
        3,
        [
            ((0, 1), TransferFunction::delay(1, 0.5)),
            ((2, 1), TransferFunction::delay(1, 0.4)),
            ((0, 2), TransferFunction::constant(0.2)),
        ],
        white(3),
    )
    .unwrap()
}

#[test]
fn worked_examples_match_closed_forms() {
    for ex in common::worked_examples(grid(256)) {
        assert!(ex.max_error < 1e-10, "{}: error {}", ex.name, ex.max_error);
        assert!(ex.max_zero_norm < 1e-12, "{}: zero entry {}", ex.name, ex.max_zero_norm);
    }
}

#[test]
fn noncausal_rows_are_orthogonal_to_their_inputs() {
    let model = models::random(&Default::default(), 3).unwrap();
    let s = psd(&model, 64);
    for j in 0..model.n() {
        let row = noncausal_wiener_row(&s, j, 0.0).unwrap();
        for (k, b) in s.values().iter().enumerate() {
            for i in (0..model.n()).filter(|&i| i != j) {
                let fitted: Complex64 =
                    row.sources().iter().map(|&l| entry(&row, l)[k] * b[(l, i)]).sum();
                assert!((b[(j, i)] - fitted).norm() < 1e-8);
            }
        }
    }
}

#[test]
fn norms_are_l2_norms_of_entries() {
    let s = psd(&models::loop4(), 32);
    let row = noncausal_wiener_row(&s, 2, 0.0).unwrap();
    assert_eq!(row.sources(), &[0, 1, 3]);
    for (e, &nrm) in row.entries().iter().zip(row.norms()) {
        assert_eq!(e.l2_norm(), nrm);
    }
}

#[test]
fn singular_spectra_are_reported_with_their_bin() {
    let g = grid(16);
    let values = (0..16).map(|k| {
        let v = if k == 5 { 1.0 } else { 2.0 };
        CMatrix::from_fn(3, 3, |a, b| if a == b { c(v) } else if a + b == 3 { c(1.0) } else { c(0.0) })
    });
    let s = SpectralMatrix::new(g, values.collect()).unwrap();
    match noncausal_wiener_row(&s, 0, 0.0) {
        Err(netid::Error::SingularBin { bin, .. }) => assert_eq!(bin, 5),
        other => panic!("expected a singular bin, got {other:?}"),
    }
    assert!(noncausal_wiener_row(&s, 0, 1e-3).is_ok());
}

#[test]
fn inverse_psd_scores_follow_the_kin_graph() {
    let s = psd(&models::collider(), 64);
    let scores = inverse_psd_kin_matrix(&s).unwrap();
    assert!(scores[0][3] < 1e-8 && scores[1][3] < 1e-8);
    assert!(scores[0][1] > 1e-3);
    for i in 0..4 {
        for j in 0..4 {
            assert!((scores[i][j] - scores[j][i]).abs() < 1e-10);
        }
    }
    let diag = psd(&LdgModel::new(3, [], white(3)).unwrap(), 16);
    let flat = inverse_psd_kin_matrix(&diag).unwrap();
    assert!((0..3).all(|i| (0..3).all(|j| i == j || flat[i][j] == 0.0)));
}

#[test]
fn ckp_components_of_the_downstream_cascade() {
    let model = models::downstream_cascade();
    let g = grid(64);
    let rows = ckp_decomposition(&model, g, 0).unwrap();
    assert!(max_diff(rows.parent[1].values(), &link(&model, 1, 0, g)) < 1e-12);
    for i in 1..4 {
        assert!(rows.child[i].l2_norm() < 1e-15 && rows.kin[i].l2_norm() < 1e-15);
        if i != 1 {
            assert!(rows.parent[i].l2_norm() < 1e-15);
        }
    }
}

#[test]
fn ckp_support_and_identity_on_random_models() {
    let g = grid(64);
    for seed in 0..6 {
        let params = models::RandomParams { n: 7, density: 0.4, causality: Causality::Noncausal, ..Default::default() };
        let model = models::random(&params, seed).unwrap();
        let graph = model.graph();
        let s = model.analytic_psd(g).unwrap();
        for j in 0..model.n() {
            let parts = ckp_decomposition(&model, g, j).unwrap();
            let row = noncausal_wiener_row(&s, j, 0.0).unwrap();
            let children = graph.children(j).unwrap();
            let parents = graph.parents(j).unwrap();
            let coparents = graph.coparents(j).unwrap();
            for i in (0..model.n()).filter(|&i| i != j) {
                assert!(max_diff(parts.total(i).values(), entry(&row, i)) < 1e-8);
                let (cn, pn, kn) = (parts.child[i].l2_norm(), parts.parent[i].l2_norm(), parts.kin[i].l2_norm());
                assert_eq!(cn > 1e-6, children.contains(&i), "child component {j},{i}: {cn}");
                assert!(children.contains(&i) || cn < 1e-9);
                assert_eq!(pn > 1e-6, parents.contains(&i), "parent component {j},{i}: {pn}");
                assert!(parents.contains(&i) || pn < 1e-9);
                assert!(coparents.contains(&i) || kn < 1e-9, "kin component {j},{i}: {kn}");
            }
        }
    }
}

#[test]
fn identity_spectrum_factors_to_identity() {
    let g = grid(32);
    let s = SpectralMatrix::new(g, vec![CMatrix::identity(3, 3); 32]).unwrap();
    let f = spectral_factorize(&s, &FactorConfig::default()).unwrap();
    assert!(f.values().iter().all(|v| (v - CMatrix::identity(3, 3)).norm() < 1e-12));
}

#[test]
fn scalar_factor_of_a_first_order_moving_average() {
    let g = grid(64);
    let target: Vec<Complex64> = g.omegas().map(|w| c(1.0) + Complex64::from_polar(0.5, -w)).collect();
    let s = SpectralMatrix::new(g, target.iter().map(|t| CMatrix::from_element(1, 1, c(t.norm_sqr()))).collect())
        .unwrap();
    let cfg = FactorConfig::default();
    for f in [cepstral_factorize(&s, &cfg).unwrap(), wilson_factorize(&s, &cfg).unwrap()] {
        let got: Vec<Complex64> = f.values().iter().map(|v| v[(0, 0)]).collect();
        assert!(max_diff(&got, &target) < 1e-10, "max diff {}", max_diff(&got, &target));
    }
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

#[test]
fn random_matrix_spectra_factor_causally() {
    let s = random_pd_spectrum(3, grid(128), 5);
    let f = spectral_factorize(&s, &FactorConfig::default()).unwrap();
    assert!(f.residual < 1e-8);
    assert!(f.anticausal_energy < 1e-6 && f.inverse_anticausal_energy < 1e-6);
    let s0 = f.lag_zero();
    for r in 0..3 {
        assert!(s0[(r, r)].re > 0.0 && s0[(r, r)].im.abs() < 1e-10);
        for col in r + 1..3 {
            assert!(s0[(r, col)].norm() < 1e-10);
        }
    }
}

#[test]
fn factorization_failure_is_numerical() {
    let s = random_pd_spectrum(3, grid(32), 1);
    let cfg = FactorConfig { max_iter: 1, ..Default::default() };
    let err = wilson_factorize(&s, &cfg).unwrap_err();
    assert!(err.is_numerical());
}

#[test]
fn causal_row_of_the_downstream_cascade_is_the_link() {
    let model = models::downstream_cascade();
    let g = grid(128);
    let row = causal_wiener_row(&psd(&model, 128), 0).unwrap();
    assert!(max_diff(entry(&row, 1), &link(&model, 1, 0, g)) < 1e-6);
    assert!(row.norm(2) < 1e-6 && row.norm(3) < 1e-6);
}

#[test]
fn causal_row_residual_is_orthogonal_to_the_past() {
    let model = models::loop4();
    let m = 256;
    let row = causal_wiener_row(&psd(&model, m), 0).unwrap();
    let taps: Vec<(usize, Vec<f64>)> = row
        .sources()
        .iter()
        .zip(row.entries())
        .map(|(&i, e)| (i, e.circular_taps()[..64].iter().map(|t| t.re).collect()))
        .collect();
    let t = 100_000;
    let panel = ldg::simulate(&model, t, 17).unwrap();
    let start = 64;
    let eps: Vec<f64> = (start..t)
        .map(|time| {
            let fit: f64 = taps
                .iter()
                .map(|(i, w)| w.iter().enumerate().map(|(k, wk)| wk * panel.channel(*i)[time - k]).sum::<f64>())
                .sum();
            panel.channel(0)[time] - fit
        })
        .collect();
    let var = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let bound = 4.0 / ((t - start) as f64).sqrt();
    for &i in row.sources() {
        for lag in 0..5 {
            let x: Vec<f64> = (start..t).map(|time| panel.channel(i)[time - lag]).collect();
            let cov = eps.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / eps.len() as f64;
            let corr = cov / (var(&eps) * var(&x)).sqrt();
            assert!(corr.abs() < bound, "source {i}, lag {lag}: {corr}");
        }
    }
}

#[test]
fn granger_matches_the_factor_shortcut() {
    let model = models::random(&Default::default(), 8).unwrap();
    let s = psd(&model, 128);
    let f = spectral_factorize(&s, &FactorConfig::default()).unwrap();
    let s0 = f.lag_zero();
    let inv = f.inverses().unwrap();
    let g = s.grid();
    let id = CMatrix::identity(model.n(), model.n());
    for j in [0, 3, model.n() - 1] {
        let row = granger_row(&s, j).unwrap();
        for i in 0..model.n() {
            let expected: Vec<Complex64> = g
                .omegas()
                .zip(&inv)
                .map(|(w, si)| Complex64::from_polar(1.0, w) * (&id - &s0 * si)[(j, i)])
                .collect();
            assert!(max_diff(entry(&row, i), &expected) < 1e-6);
        }
    }
}

#[test]
fn granger_examples() {
    let g = grid(64);
    let white_psd = psd(&LdgModel::new(3, [], white(3)).unwrap(), 64);
    let row = granger_row(&white_psd, 1).unwrap();
    assert_eq!(row.sources(), &[0, 1, 2]);
    assert!(row.norms().iter().all(|&v| v < 1e-6));

    let model = LdgModel::new(2, [((0, 1), TransferFunction::delay(1, 0.9))], white(2)).unwrap();
    let row = granger_row(&model.analytic_psd(g).unwrap(), 1).unwrap();
    assert!(entry(&row, 0).iter().all(|v| (v - c(0.9)).norm() < 1e-8));
    assert!(row.norm(1) < 1e-8);

    let model = models::downstream_cascade();
    let row = granger_row(&psd(&model, 128), 0).unwrap();
    // x0 has no dynamics of its own, so only its parent predicts it
    assert!(row.norm(1) > 1e-3);
    assert!(row.norm(0) < 5e-3 && row.norm(2) < 5e-3 && row.norm(3) < 5e-3);
}

#[test]
fn decisions_on_analytic_rows() {
    let s = psd(&models::collider(), 64);
    let rows = noncausal_rows(&s, 0.0).unwrap();
    let (graph, decisions) = decide_edges(&rows, ThresholdRule::default()).unwrap();
    assert_eq!(graph, models::collider().graph().kin_graph());
    assert_eq!(decisions.len(), 6);
    assert!(decisions.iter().all(|d| d.accepted == (d.score > d.threshold)));

    let ring = models::ring(15, 5, 7).unwrap();
    let rows = noncausal_rows(&psd(&ring, 256), 0.0).unwrap();
    let (graph, _) = decide_edges(&rows, ThresholdRule::default()).unwrap();
    assert_eq!(graph, ring.graph().topology());

    let empty = noncausal_rows(&psd(&LdgModel::new(4, [], white(4)).unwrap(), 16), 0.0).unwrap();
    for rule in [ThresholdRule::default(), ThresholdRule::Absolute { tau: 0.0 }, ThresholdRule::TopK { k: 2 }] {
        assert_eq!(decide_edges(&empty, rule).unwrap().0, UndirectedGraph::new(4));
    }
}

#[test]
fn ties_are_rejected() {
    assert!(!EdgeDecision::new(0, 1, 0.5, 0.5).accepted);
    assert!(EdgeDecision::new(0, 1, 0.5000001, 0.5).accepted);
}

#[test]
fn top_k_and_partial_coherence_rules() {
    let ring = models::ring(6, 2, 3).unwrap();
    let rows = noncausal_rows(&psd(&ring, 64), 0.0).unwrap();
    let (graph, _) = decide_edges(&rows, ThresholdRule::TopK { k: 2 }).unwrap();
    assert_eq!(graph, ring.graph().topology());
    let model = models::collider();
    let rows = noncausal_rows(&psd(&model, 64), 0.0).unwrap();
    let kin = model.graph().kin_graph();
    let (graph, _) = decide_edges(&rows, ThresholdRule::PartialCoherence { tau: 1e-4 }).unwrap();
    assert_eq!(graph, kin);
    assert!(ThresholdRule::parse("topk", 2.5).is_err());
    assert!(ThresholdRule::parse("median", 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn relative_decisions_are_scale_equivariant(scale in 1e-3f64..1e3, seed in 0u64..50) {
        let model = models::random(&Default::default(), seed).unwrap();
        let s = psd(&model, 32);
        let rule = ThresholdRule::default();
        let base = decide_edges(&noncausal_rows(&s, 0.0).unwrap(), rule).unwrap();
        let scaled = decide_edges(&noncausal_rows(&s.scale(scale * scale), 0.0).unwrap(), rule).unwrap();
        prop_assert_eq!(base.0, scaled.0);
        for (a, b) in base.1.iter().zip(&scaled.1) {
            prop_assert!((a.score - b.score).abs() < 1e-9);
        }
    }

    #[test]
    fn inverse_identity_holds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..6);
        let mut draw = || CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let q = draw() + CMatrix::identity(n, n) * c(3.0);
        let delta = draw() + CMatrix::identity(n, n) * c(2.0);
        let lhs = (&q + &delta).try_inverse().unwrap() - q.clone().try_inverse().unwrap();
        let rhs = perturbed_inverse_difference(&q, &delta).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-10);
    }
}

#[test]
fn robustness_bound_holds_on_a_corrupted_ring() {
    let g = grid(64);
    let base = models::ring(4, 3, 2).unwrap();
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
                let d: f64 = clean
                    .sources()
                    .iter()
                    .map(|&i| (entry(&clean, i)[k] - entry(&noisy, i)[k]).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                assert!(d <= *b, "sigma2 {sigma2}, row {j}, bin {k}: {d} > {b}");
            }
        }
        let zero = robustness_bound(&s_y, &eta.scale(0.0), 0).unwrap();
        assert!(zero.iter().all(|&b| b == 0.0));
    }
}

#[test]
fn robust_detection_is_sound_on_the_collider() {
    let g = grid(64);
    let truth = models::collider();
    let kin = truth.graph().kin_graph();
    let mut crossover = None;
    for p in 0..=24 {
        let sigma2 = 1e-6 * 10f64.powf(p as f64 / 4.0);
        let model = truth.clone().with_measurement_noise(vec![NoiseSpec::white(sigma2); 4]).unwrap();
        let s_y = model.analytic_output_psd(g).unwrap();
        let d = vec![sigma2; g.len()];
        let rows = noncausal_rows(&s_y, 0.0).unwrap();
        let graph = match robust_detect(&s_y, &d, &rows) {
            Ok((graph, _)) => graph,
            Err(e) => {
                assert!(matches!(e, netid::Error::NoValidBin(_)));
                break;
            }
        };
        assert!(graph.difference(&kin).is_empty(), "sigma2 {sigma2}: non-kin edge accepted");
        if p == 0 {
            assert_eq!(graph, kin);
        }
        if graph != kin && crossover.is_none() {
            crossover = Some(sigma2);
        }
    }
    // the co-parent and downstream pairs are lost between 0.1 and 0.18
    assert!(crossover.is_some_and(|s| s > 1e-2 && s < 1.0), "crossover {crossover:?}");
}

#[test]
fn robust_detection_limits() {
    let g = grid(32);
    let model = models::collider();
    let s = model.analytic_psd(g).unwrap();
    let rows = noncausal_rows(&s, 0.0).unwrap();
    // without noise any nonzero entry is accepted, rounding residue included
    let (_, decisions) = robust_detect(&s, &vec![0.0; 32], &rows).unwrap();
    for d in &decisions {
        let nonzero = rows[d.j].norm(d.i) > 0.0 || rows[d.i].norm(d.j) > 0.0;
        assert_eq!(d.accepted, nonzero);
    }
    // just below the precondition everywhere: all deviations are noise-explained
    let min_eig = s
        .values()
        .iter()
        .map(|b| b.clone().symmetric_eigenvalues().min())
        .fold(f64::INFINITY, f64::min);
    let (graph, _) = robust_detect(&s, &vec![0.999 * min_eig; 32], &rows).unwrap();
    assert!(graph.edge_count() < model.graph().kin_graph().edge_count());
    let err = robust_detect(&s, &vec![1e6; 32], &rows).unwrap_err();
    assert!(matches!(err, netid::Error::NoValidBin(_)));
}

#[test]
fn constructed_cancellation_is_flagged() {
    let model = cancellation_instance();
    let g = grid(64);
    assert!(model.graph().kin_graph().has_edge(0, 2));
    let rows = noncausal_rows(&model.analytic_psd(g).unwrap(), 0.0).unwrap();
    assert!(rows[0].norm(2) < 1e-12 && rows[2].norm(0) < 1e-12);
    assert_eq!(detect_cancellation(&model, g).unwrap(), vec![(0, 2)]);
    assert!(detect_cancellation(&models::ring(5, 2, 1).unwrap(), g).unwrap().is_empty());
    for seed in 0..20 {
        let params = models::RandomParams { n: 4 + seed as usize % 7, ..Default::default() };
        let m = models::random(&params, seed).unwrap();
        assert!(detect_cancellation(&m, g).unwrap().is_empty());
    }
}

#[test]
fn rows_do_not_depend_on_thread_count() {
    let s = psd(&models::random(&Default::default(), 4).unwrap(), 64);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            (noncausal_rows(&s, 0.0).unwrap(), granger_rows(&s, &CausalConfig::default()).unwrap())
        })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn wiener_rows_round_trip_through_json() {
    let s = psd(&models::loop4(), 128);
    let row = causal_wiener_row(&s, 1).unwrap();
    let text = serde_json::to_string(&row.to_document()).unwrap();
    let back = WienerRow::from_document(&serde_json::from_str(&text).unwrap()).unwrap();
    assert_eq!(back, row);
    assert!(DirectedGraph::ring(3).is_ok());
}
