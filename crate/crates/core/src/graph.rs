//! Directed and undirected graph algebra for network topologies.
//!
//! Nodes are dense indices `0..n`. An arc `(i, j)` of a [`DirectedGraph`] points from node `i`
//! to node `j`, i.e. node `i` drives node `j` through the transfer function `H_ji`.
//!
//! The kin relation of a node collects its children, its parents and the other parents of its
//! children. The kin-graph connects every node with its kins and is what the Wiener-filter
//! reconstruction recovers; a graph whose topology already equals its kin-graph is *self-kin*.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relation of a node `i` with respect to a reference node `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KinClass {
    Child,
    Parent,
    ProperKin,
    NonKin,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DirectedGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UndirectedGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

fn check_node(node: usize, n: usize) -> Result<()> {
    if node >= n {
        return Err(Error::NodeOutOfRange { node, n });
    }
    Ok(())
}

impl DirectedGraph {
    pub fn new(n: usize) -> Self {
        Self { n, edges: BTreeSet::new() }
    }

    /// Builds a graph without the antiparallel-arc restriction (plain graph algebra).
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::new(n);
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    /// Builds a graph suitable for backing a linear dynamic graph: antiparallel arcs are rejected.
    pub fn from_edges_strict<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let g = Self::from_edges(n, edges)?;
        g.check_no_antiparallel()?;
        Ok(g)
    }

    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<()> {
        check_node(from, self.n)?;
        check_node(to, self.n)?;
        if from == to {
            return Err(Error::InvalidGraph(format!("self-loop on node {from}")));
        }
        self.edges.insert((from, to));
        Ok(())
    }

    pub fn check_no_antiparallel(&self) -> Result<()> {
        for &(i, j) in &self.edges {
            if self.edges.contains(&(j, i)) {
                return Err(Error::InvalidGraph(format!(
                    "antiparallel arcs {i}->{j} and {j}->{i}"
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    /// Directed cycle `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGraph(format!(
                "a ring needs at least 3 nodes, got {n}"
            )));
        }
        Self::from_edges_strict(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    /// Directed path `0 -> 1 -> ... -> n-1`.
    pub fn chain(n: usize) -> Result<Self> {
        Self::from_edges_strict(n, (1..n).map(|i| (i - 1, i)))
    }

    pub fn children(&self, j: usize) -> Result<BTreeSet<usize>> {
        check_node(j, self.n)?;
        Ok(self
            .edges
            .range((j, 0)..=(j, usize::MAX))
            .map(|&(_, c)| c)
            .collect())
    }

    pub fn parents(&self, j: usize) -> Result<BTreeSet<usize>> {
        check_node(j, self.n)?;
        Ok(self
            .edges
            .iter()
            .filter(|&&(_, to)| to == j)
            .map(|&(p, _)| p)
            .collect())
    }

    /// Parents of the children of `j`, excluding `j` itself.
    pub fn coparents(&self, j: usize) -> Result<BTreeSet<usize>> {
        let mut out = BTreeSet::new();
        for c in self.children(j)? {
            out.extend(self.parents(c)?);
        }
        out.remove(&j);
        Ok(out)
    }

    /// Children, parents and co-parents of `j`, without `j`.
    pub fn kins(&self, j: usize) -> Result<BTreeSet<usize>> {
        let mut out = self.children(j)?;
        out.extend(self.parents(j)?);
        out.extend(self.coparents(j)?);
        out.remove(&j);
        Ok(out)
    }

    pub fn classify_kin(&self, j: usize, i: usize) -> Result<KinClass> {
        check_node(j, self.n)?;
        check_node(i, self.n)?;
        if i == j {
            return Err(Error::SelfPair(i));
        }
        Ok(if self.has_edge(j, i) {
            KinClass::Child
        } else if self.has_edge(i, j) {
            KinClass::Parent
        } else if self.coparents(j)?.contains(&i) {
            KinClass::ProperKin
        } else {
            KinClass::NonKin
        })
    }

    pub fn topology(&self) -> UndirectedGraph {
        let mut u = UndirectedGraph::new(self.n);
        for &(i, j) in &self.edges {
            u.edges.insert(canonical(i, j));
        }
        u
    }

    pub fn kin_graph(&self) -> UndirectedGraph {
        let mut u = self.topology();
        for c in 0..self.n {
            let ps: Vec<usize> = self
                .edges
                .iter()
                .filter(|&&(_, to)| to == c)
                .map(|&(p, _)| p)
                .collect();
            for (a, &p) in ps.iter().enumerate() {
                for &q in &ps[a + 1..] {
                    u.edges.insert(canonical(p, q));
                }
            }
        }
        u
    }

    pub fn is_self_kin(&self) -> bool {
        self.topology() == self.kin_graph()
    }

    /// DOT text; `labels` replaces node indices when given.
    pub fn to_dot(&self, labels: Option<&[String]>) -> String {
        dot_document("digraph", "->", self.n, self.edges.iter().copied(), labels)
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            n: self.n,
            directed: true,
            edges: self.edges.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }
}

fn canonical(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

impl UndirectedGraph {
    pub fn new(n: usize) -> Self {
        Self { n, edges: BTreeSet::new() }
    }

    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::new(n);
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        check_node(i, self.n)?;
        check_node(j, self.n)?;
        if i == j {
            return Err(Error::InvalidGraph(format!("self-loop on node {i}")));
        }
        self.edges.insert(canonical(i, j));
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as `(min, max)` pairs in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&canonical(i, j))
    }

    pub fn difference(&self, other: &UndirectedGraph) -> BTreeSet<(usize, usize)> {
        self.edges.difference(&other.edges).copied().collect()
    }

    pub fn to_dot(&self, labels: Option<&[String]>) -> String {
        dot_document("graph", "--", self.n, self.edges.iter().copied(), labels)
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            n: self.n,
            directed: false,
            edges: self.edges.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }
}

fn dot_document(
    kind: &str,
    arrow: &str,
    n: usize,
    edges: impl Iterator<Item = (usize, usize)>,
    labels: Option<&[String]>,
) -> String {
    let name = |i: usize| -> String {
        match labels.and_then(|l| l.get(i)) {
            Some(l) => format!("\"{}\"", l.replace('"', "\\\"")),
            None => i.to_string(),
        }
    };
    let mut out = format!("{kind} G {{\n");
    for i in 0..n {
        let _ = writeln!(out, "  {};", name(i));
    }
    for (i, j) in edges {
        let _ = writeln!(out, "  {} {arrow} {};", name(i), name(j));
    }
    out.push_str("}\n");
    out
}

/// On-disk JSON form shared by both graph kinds. Edge order is not significant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub n: usize,
    pub directed: bool,
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnyGraph {
    Directed(DirectedGraph),
    Undirected(UndirectedGraph),
}

impl GraphDocument {
    pub fn into_graph(self) -> Result<AnyGraph> {
        let edges = self.edges.into_iter().map(|[i, j]| (i, j));
        Ok(if self.directed {
            AnyGraph::Directed(DirectedGraph::from_edges(self.n, edges)?)
        } else {
            AnyGraph::Undirected(UndirectedGraph::from_edges(self.n, edges)?)
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph document serializes")
    }
}

impl AnyGraph {
    /// Undirected view: the topology of a directed graph, or the graph itself.
    pub fn into_undirected(self) -> UndirectedGraph {
        match self {
            AnyGraph::Directed(g) => g.topology(),
            AnyGraph::Undirected(g) => g,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Set comparison of predicted against reference edges. Precision and recall are 1 when
/// their denominators vanish.
pub fn compare_edge_sets(
    predicted: &UndirectedGraph,
    truth: &UndirectedGraph,
) -> Result<EdgeMetrics> {
    if predicted.n != truth.n {
        return Err(Error::SizeMismatch { left: predicted.n, right: truth.n });
    }
    let tp = predicted.edges.intersection(&truth.edges).count();
    let fp = predicted.edges.len() - tp;
    let fn_ = truth.edges.len() - tp;
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(EdgeMetrics {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        precision,
        recall,
        f1,
    })
}
