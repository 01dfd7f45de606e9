//! Model generators: the four small worked networks, rings, rooted trees and random LDGs.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ldg::{LdgModel, NoiseSpec};
use crate::lti::{FrequencyGrid, TransferFunction};

/// Attempts made by a generator before giving up on drawing a valid model.
pub const MAX_ATTEMPTS: usize = 20;

fn unit_noise(n: usize) -> Vec<NoiseSpec> {
    vec![NoiseSpec::white(1.0); n]
}

fn tf(taps: &[f64], offset: i64) -> TransferFunction {
    TransferFunction::new(taps.to_vec(), offset)
}

/// `x3 = e3`, `x_{i-1} = e_{i-1} + H_{i-1,i} x_i`: a chain flowing towards node 0.
pub fn downstream_cascade() -> LdgModel {
    LdgModel::new(
        4,
        [
            ((1, 0), tf(&[0.5, 0.3], 1)),
            ((2, 1), tf(&[0.4, -0.2], 0)),
            ((3, 2), tf(&[0.7], 1)),
        ],
        unit_noise(4),
    )
    .expect("valid model")
}

/// `x0 = e0`, `x_{i+1} = H_{i+1,i} x_i + e_{i+1}`: a chain flowing away from node 0.
pub fn upstream_cascade() -> LdgModel {
    LdgModel::new(
        4,
        [
            ((0, 1), tf(&[0.8, -0.3], 1)),
            ((1, 2), tf(&[0.5, 0.25], 0)),
            ((2, 3), tf(&[0.6], 1)),
        ],
        unit_noise(4),
    )
    .expect("valid model")
}

/// Directed 4-cycle `0 -> 1 -> 2 -> 3 -> 0`.
pub fn loop4() -> LdgModel {
    LdgModel::new(
        4,
        [
            ((0, 1), tf(&[0.6, 0.2], 1)),
            ((1, 2), tf(&[0.7], 1)),
            ((2, 3), tf(&[0.4, 0.3], 0)),
            ((3, 0), tf(&[0.5], 1)),
        ],
        unit_noise(4),
    )
    .expect("valid model")
}

/// Nodes 0 and 1 both drive node 2, which drives node 3.
pub fn collider() -> LdgModel {
    LdgModel::new(
        4,
        [
            ((0, 2), tf(&[0.7, 0.2], 1)),
            ((1, 2), tf(&[0.5, -0.3], 1)),
            ((2, 3), tf(&[0.6], 1)),
        ],
        unit_noise(4),
    )
    .expect("valid model")
}

/// Where the taps of generated links may sit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Causality {
    /// Lags `>= 1`.
    #[default]
    Strict,
    /// Lags `>= 0`.
    Causal,
    /// Lags may start as early as `-2`.
    Noncausal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomParams {
    pub n: usize,
    /// Probability that an unordered pair carries an arc.
    pub density: f64,
    /// Largest number of taps per link.
    pub max_taps: usize,
    /// Upper bound on the summed l1 gain of the links entering any node.
    pub gain: f64,
    pub causality: Causality,
    /// Draw `1 + a z^-1` noise shaping and random variances instead of unit white noise.
    pub colored_noise: bool,
}

impl Default for RandomParams {
    fn default() -> Self {
        Self {
            n: 8,
            density: 0.3,
            max_taps: 3,
            gain: 0.8,
            causality: Causality::Strict,
            colored_noise: true,
        }
    }
}

fn random_taps(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    loop {
        let taps: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        if taps.iter().any(|t: &f64| t.abs() > 1e-3) {
            return taps;
        }
    }
}

fn random_link(rng: &mut ChaCha8Rng, max_taps: usize, causality: Causality, gain: f64) -> TransferFunction {
    let len = rng.random_range(1..=max_taps.max(1));
    let offset = match causality {
        Causality::Strict => rng.random_range(1..=2),
        Causality::Causal => rng.random_range(0..=1),
        Causality::Noncausal => rng.random_range(-2..=1),
    };
    let raw = TransferFunction::new(random_taps(rng, len), offset);
    raw.scale(gain / raw.l1_gain())
}

fn random_noise(rng: &mut ChaCha8Rng, n: usize, colored: bool) -> Vec<NoiseSpec> {
    if !colored {
        return unit_noise(n);
    }
    (0..n)
        .map(|_| {
            let a = rng.random_range(-0.45..0.45);
            let variance = rng.random_range(0.5..2.0);
            NoiseSpec::new(TransferFunction::new(vec![1.0, a], 0), variance).expect("valid noise")
        })
        .collect()
}

/// Scales the links entering each node so their l1 gains sum to at most `gain`, which keeps
/// `(I - H)^-1` a convergent Neumann series on the unit circle.
fn bound_row_gains(
    rng: &mut ChaCha8Rng,
    links: Vec<((usize, usize), TransferFunction)>,
    n: usize,
    gain: f64,
) -> Vec<((usize, usize), TransferFunction)> {
    let mut totals = vec![0.0; n];
    for ((_, to), h) in &links {
        totals[*to] += h.l1_gain();
    }
    let budget: Vec<f64> = (0..n).map(|_| gain * rng.random_range(0.6..1.0)).collect();
    links
        .into_iter()
        .map(|((from, to), h)| {
            let s = if totals[to] > budget[to] { budget[to] / totals[to] } else { 1.0 };
            ((from, to), h.scale(s))
        })
        .collect()
}

fn accept(model: LdgModel) -> Option<LdgModel> {
    let cert = model.validate(FrequencyGrid::default());
    let causal_ok = cert.causal || model.links().any(|(_, h)| !h.is_causal());
    (cert.well_posed && cert.detectable && causal_ok).then_some(model)
}

fn retry(mut draw: impl FnMut() -> Result<Option<LdgModel>>) -> Result<LdgModel> {
    for _ in 0..MAX_ATTEMPTS {
        if let Some(m) = draw()? {
            return Ok(m);
        }
    }
    Err(Error::InvalidModel(format!("no valid model after {MAX_ATTEMPTS} attempts")))
}

/// Ring `0 -> 1 -> ... -> n-1 -> 0` with strictly causal FIR links of `fir_order` delays and
/// unit white noise on every node.
pub fn ring(n: usize, fir_order: usize, seed: u64) -> Result<LdgModel> {
    if n < 3 || fir_order == 0 {
        return Err(Error::InvalidConfig("ring needs n >= 3 and fir_order >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    retry(|| {
        let links: Vec<_> = (0..n)
            .map(|i| {
                let gain = rng.random_range(0.6..0.9);
                let raw = TransferFunction::new(random_taps(&mut rng, fir_order), 1);
                ((i, (i + 1) % n), raw.scale(gain / raw.l1_gain()))
            })
            .collect();
        Ok(accept(LdgModel::new(n, links, unit_noise(n))?))
    })
}

/// Rooted tree: node `i > 0` has a single parent drawn among `0..i`.
pub fn tree(n: usize, seed: u64) -> Result<LdgModel> {
    if n == 0 {
        return Err(Error::InvalidConfig("tree needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    retry(|| {
        let links: Vec<_> = (1..n)
            .map(|i| {
                let parent = rng.random_range(0..i);
                let gain = rng.random_range(0.5..0.9);
                ((parent, i), random_link(&mut rng, 3, Causality::Strict, gain))
            })
            .collect();
        Ok(accept(LdgModel::new(n, links, unit_noise(n))?))
    })
}

/// Random directed graph without antiparallel arcs; cycles are allowed.
pub fn random(params: &RandomParams, seed: u64) -> Result<LdgModel> {
    let n = params.n;
    if n == 0 || !(0.0..=1.0).contains(&params.density) || !(params.gain > 0.0 && params.gain < 1.0) {
        return Err(Error::InvalidConfig("random needs n >= 1, density in [0, 1], gain in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    retry(|| {
        let mut links = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(params.density) {
                    let (from, to) = if rng.random_bool(0.5) { (i, j) } else { (j, i) };
                    let h = random_link(&mut rng, params.max_taps, params.causality, 1.0);
                    links.push(((from, to), h));
                }
            }
        }
        let links = bound_row_gains(&mut rng, links, n, params.gain);
        let noise = random_noise(&mut rng, n, params.colored_noise);
        Ok(accept(LdgModel::new(n, links, noise)?))
    })
}

/// 24-node strictly causal network with co-parent pairs that are not adjacent.
pub fn net24(seed: u64) -> Result<LdgModel> {
    let params = RandomParams {
        n: 24,
        density: 0.1,
        max_taps: 3,
        gain: 0.8,
        causality: Causality::Strict,
        colored_noise: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let m = random(&params, rng.random())?;
        let g = m.graph();
        let proper: BTreeSet<_> = g.kin_graph().difference(&g.topology());
        if proper.len() >= 3 {
            return Ok(m);
        }
    }
    Err(Error::InvalidModel(format!("no suitable network after {MAX_ATTEMPTS} attempts")))
}
