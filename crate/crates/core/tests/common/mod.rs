#![allow(dead_code)]

use netid::ldg::LdgModel;
use netid::lti::{FrequencyGrid, FrequencyResponse};
use netid::models::{self, Causality, RandomParams};
use netid::wiener::{noncausal_wiener_row, WienerRow};
use num_complex::Complex64;

pub fn grid(m: usize) -> FrequencyGrid {
    FrequencyGrid::new(m).unwrap()
}

/// Response of `H_{to,from}`.
pub fn link(model: &LdgModel, from: usize, to: usize, g: FrequencyGrid) -> Vec<Complex64> {
    model.link(from, to).expect("arc present").freq_response(g).into_values()
}

pub fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn entry(row: &WienerRow, i: usize) -> &[Complex64] {
    row.entry(i).map(FrequencyResponse::values).expect("source present")
}

/// Outcome of one worked example: largest per-bin error against the closed form and largest
/// norm among the entries that must vanish.
#[derive(Debug)]
pub struct ExampleCheck {
    pub name: &'static str,
    pub max_error: f64,
    pub max_zero_norm: f64,
}

fn check(name: &'static str, row: &WienerRow, expected: &[(usize, Vec<Complex64>)], zeros: &[usize]) -> ExampleCheck {
    let max_error = expected.iter().map(|(i, e)| max_diff(entry(row, *i), e)).fold(0.0, f64::max);
    let max_zero_norm = zeros.iter().map(|&i| row.norm(i)).fold(0.0, f64::max);
    ExampleCheck { name, max_error, max_zero_norm }
}

/// Row of node 0 in each of the four small networks against its closed form, unit noises.
pub fn worked_examples(g: FrequencyGrid) -> Vec<ExampleCheck> {
    let one = Complex64::new(1.0, 0.0);
    let row0 = |model: &LdgModel| noncausal_wiener_row(&model.analytic_psd(g).unwrap(), 0, 0.0).unwrap();
    let mut out = Vec::new();

    let model = models::downstream_cascade();
    out.push(check("downstream", &row0(&model), &[(1, link(&model, 1, 0, g))], &[2, 3]));

    // x0 exogenous: Phi_x0 = Phi_e0 = 1
    let model = models::upstream_cascade();
    let h10 = link(&model, 0, 1, g);
    let w01: Vec<Complex64> = h10.iter().map(|h| h.conj() / (h.norm_sqr() + 1.0)).collect();
    out.push(check("upstream", &row0(&model), &[(1, w01)], &[2, 3]));

    let model = models::loop4();
    let h10 = link(&model, 0, 1, g);
    let h03 = link(&model, 3, 0, g);
    let w01: Vec<Complex64> = h10.iter().map(|h| h.conj() / (h.norm_sqr() + 1.0)).collect();
    let w03: Vec<Complex64> =
        h10.iter().zip(&h03).map(|(h, p)| (one - h.norm_sqr() / (h.norm_sqr() + 1.0)) * p).collect();
    out.push(check("loop", &row0(&model), &[(1, w01), (3, w03)], &[2]));

    let model = models::collider();
    let h20 = link(&model, 0, 2, g);
    let h21 = link(&model, 1, 2, g);
    let c: Vec<Complex64> = h20.iter().map(|h| h.conj() / (h.norm_sqr() + 1.0)).collect();
    let w01: Vec<Complex64> = c.iter().zip(&h21).map(|(c, h)| -c * h).collect();
    out.push(check("collider", &row0(&model), &[(1, w01), (2, c)], &[3]));
    out
}

/// Members of the random suite: node counts cycle through 4..=12 over 20 seeds.
pub fn suite(causality: Causality) -> Vec<LdgModel> {
    (0..20u64)
        .map(|seed| {
            let params = RandomParams {
                n: 4 + (seed as usize) % 9,
                density: 0.35,
                causality,
                ..RandomParams::default()
            };
            models::random(&params, 1000 + seed).unwrap()
        })
        .collect()
}
