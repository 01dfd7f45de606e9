use serde::{Deserialize, Serialize};

use super::row::WienerRow;
use crate::error::{Error, Result};
use crate::graph::UndirectedGraph;

/// How a pair's filter norms are turned into an accept/reject decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum ThresholdRule {
    /// Accept when `max(|W_ji|, |W_ij|) > tau`.
    #[serde(rename = "abs")]
    Absolute { tau: f64 },
    /// Accept when either norm exceeds `tau` times the largest norm of its own row.
    #[serde(rename = "rel")]
    Relative { tau: f64 },
    /// Accept when `i` is among the `k` strongest sources of row `j`, or vice versa.
    #[serde(rename = "topk")]
    TopK { k: usize },
    /// Accept when `|W_ji|^2 E_i / E_j`, averaged over bins, exceeds `tau^2`, where `E_j` is the
    /// error PSD of row `j`. For non-causal rows this is the mean partial coherence of the pair.
    #[serde(rename = "pcoh")]
    PartialCoherence { tau: f64 },
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::Relative { tau: 0.1 }
    }
}

impl ThresholdRule {
    pub fn parse(rule: &str, tau: f64) -> Result<Self> {
        match rule {
            "abs" => Ok(Self::Absolute { tau }),
            "rel" => Ok(Self::Relative { tau }),
            "pcoh" => Ok(Self::PartialCoherence { tau }),
            "topk" if tau >= 0.0 && tau.fract() == 0.0 => Ok(Self::TopK { k: tau as usize }),
            "topk" => Err(Error::InvalidConfig(format!("top-k needs a whole number, got {tau}"))),
            other => Err(Error::InvalidConfig(format!("unknown threshold rule {other:?}"))),
        }
    }
}

/// Outcome for the unordered pair `{i, j}`, `i < j`.
///
/// `score` is `max(|W_ji|, |W_ij|)` for the absolute rule, the larger row-normalized norm for
/// the relative rule, the larger standardized norm for the partial-coherence rule, and the
/// larger margin over the row's `(k+1)`-th strongest norm for top-k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeDecision {
    pub i: usize,
    pub j: usize,
    pub score: f64,
    pub threshold: f64,
    pub accepted: bool,
}

impl EdgeDecision {
    pub fn new(i: usize, j: usize, score: f64, threshold: f64) -> Self {
        Self { i, j, score, threshold, accepted: score > threshold }
    }
}

fn check_rows(rows: &[WienerRow]) -> Result<()> {
    for (j, row) in rows.iter().enumerate() {
        if row.target() != j {
            return Err(Error::InvalidConfig(format!("row {j} has target {}", row.target())));
        }
    }
    let grids: Vec<_> = rows.iter().filter_map(WienerRow::grid).collect();
    for g in grids.windows(2) {
        g[0].check_same(&g[1])?;
    }
    Ok(())
}

/// `sqrt(mean_k |W_ji(k)|^2 E_i(k) / E_j(k))`.
fn standardized_norm(rows: &[WienerRow], j: usize, i: usize) -> f64 {
    let Some(entry) = rows[j].entry(i) else { return 0.0 };
    let (ei, ej) = (rows[i].error_psd(), rows[j].error_psd());
    let total: f64 = entry
        .values()
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let w2 = w.norm_sqr();
            if w2 == 0.0 {
                0.0
            } else if ej[k] > 0.0 {
                w2 * ei[k] / ej[k]
            } else {
                f64::INFINITY
            }
        })
        .sum();
    (total / entry.values().len() as f64).sqrt()
}

/// `(k+1)`-th largest off-diagonal norm of a row, or zero when the row is shorter.
fn top_k_floor(row: &WienerRow, k: usize) -> f64 {
    let mut norms: Vec<f64> = row
        .sources()
        .iter()
        .zip(row.norms())
        .filter(|(&s, _)| s != row.target())
        .map(|(_, &v)| v)
        .collect();
    norms.sort_by(|a, b| b.total_cmp(a));
    norms.get(k).copied().unwrap_or(0.0)
}

/// Thresholds the rows `rows[j]` (target `j`) into an undirected edge set.
pub fn decide_edges(
    rows: &[WienerRow],
    rule: ThresholdRule,
) -> Result<(UndirectedGraph, Vec<EdgeDecision>)> {
    check_rows(rows)?;
    let n = rows.len();
    let maxima: Vec<f64> = rows.iter().map(WienerRow::max_norm).collect();
    let floors: Vec<f64> = match rule {
        ThresholdRule::TopK { k } => rows.iter().map(|r| top_k_floor(r, k)).collect(),
        _ => vec![0.0; n],
    };
    let relative = |j: usize, i: usize| {
        if maxima[j] > 0.0 { rows[j].norm(i) / maxima[j] } else { 0.0 }
    };
    let mut graph = UndirectedGraph::new(n);
    let mut decisions = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let (score, threshold) = match rule {
                ThresholdRule::Absolute { tau } => (rows[j].norm(i).max(rows[i].norm(j)), tau),
                ThresholdRule::Relative { tau } => (relative(j, i).max(relative(i, j)), tau),
                ThresholdRule::PartialCoherence { tau } => {
                    (standardized_norm(rows, j, i).max(standardized_norm(rows, i, j)), tau)
                }
                ThresholdRule::TopK { .. } => {
                    ((rows[j].norm(i) - floors[j]).max(rows[i].norm(j) - floors[i]), 0.0)
                }
            };
            let d = EdgeDecision::new(i, j, score, threshold);
            if d.accepted {
                graph.add_edge(i, j)?;
            }
            decisions.push(d);
        }
    }
    Ok((graph, decisions))
}

/// `scores[j][i] = |W_ji|`, one row per target.
pub fn score_matrix(rows: &[WienerRow]) -> Vec<Vec<f64>> {
    let n = rows.len();
    rows.iter().map(|r| (0..n).map(|i| r.norm(i)).collect()).collect()
}

pub fn scores_to_csv(scores: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in scores {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
