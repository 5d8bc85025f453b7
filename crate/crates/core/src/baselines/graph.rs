//! Space-time decoding graphs for one stabilizer type.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::bits::BitVector;
use crate::code::{PauliKind, SurfaceCode};
use crate::error::{check_len, Error, Result};
use crate::noise::NoiseModel;

/// Clamp applied to every edge probability so log-odds stay finite.
pub const PROB_EPS: f64 = 1e-9;

/// Physical mechanism behind an edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EdgeSupport {
    /// Error on this data qubit.
    Data(usize),
    /// Measurement flip of this stabilizer.
    Measurement(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub prob: f64,
    pub weight: f64,
    pub support: EdgeSupport,
}

/// Detector nodes `(round, stabilizer)` plus one virtual boundary node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecodingGraph {
    pub kind: PauliKind,
    n_stabs: usize,
    rounds: usize,
    n_data: usize,
    edges: Vec<Edge>,
    #[serde(skip)]
    adjacency: Vec<Vec<usize>>,
    /// Set when some edge had negative log-odds and was clamped to zero for
    /// shortest-path search.
    pub negative_weights: bool,
}

pub fn log_odds(p: f64) -> f64 {
    ((1.0 - p) / p).ln()
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Builds the graph whose detectors are stabilizers of `kind`.
///
/// Space-like edges join the stabilizers of `kind` that share a data qubit
/// (or one stabilizer and the boundary), one copy per round; time-like edges
/// join the same stabilizer in consecutive rounds when measurements are noisy.
pub fn build_decoding_graph(code: &SurfaceCode, noise: &NoiseModel, rounds: usize, kind: PauliKind) -> Result<DecodingGraph> {
    noise.validate()?;
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be at least 1".into()));
    }
    let stabs = code.stabilizers(kind);
    let n_stabs = stabs.len();
    let n_data = code.n_data();
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); n_data];
    for (i, st) in stabs.iter().enumerate() {
        for &q in &st.support {
            touching[q].push(i);
        }
    }
    let boundary = n_stabs * rounds;
    // X or Y flips a Z check, Z or Y flips an X check
    let p_edge = clamp_prob(2.0 * noise.p_phys / 3.0);
    let mut edges = Vec::new();
    for k in 0..rounds {
        for (q, ts) in touching.iter().enumerate() {
            let (a, b) = match ts.as_slice() {
                [i] => (k * n_stabs + i, boundary),
                [i, j] => (k * n_stabs + i, k * n_stabs + j),
                _ => continue,
            };
            edges.push(Edge {
                a,
                b,
                prob: p_edge,
                weight: log_odds(p_edge),
                support: EdgeSupport::Data(q),
            });
        }
    }
    if noise.p_meas > 0.0 {
        let pm = clamp_prob(noise.p_meas);
        for k in 0..rounds.saturating_sub(1) {
            for i in 0..n_stabs {
                edges.push(Edge {
                    a: k * n_stabs + i,
                    b: (k + 1) * n_stabs + i,
                    prob: pm,
                    weight: log_odds(pm),
                    support: EdgeSupport::Measurement(i),
                });
            }
        }
    }
    DecodingGraph::from_edges(kind, n_stabs, rounds, n_data, edges)
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest paths: distances and the edge used to reach each node.
#[derive(Clone, Debug)]
pub struct ShortestPaths {
    pub source: usize,
    pub dist: Vec<f64>,
    pub pred: Vec<Option<usize>>,
}

impl DecodingGraph {
    pub(crate) fn from_edges(kind: PauliKind, n_stabs: usize, rounds: usize, n_data: usize, edges: Vec<Edge>) -> Result<Self> {
        let n_nodes = n_stabs * rounds + 1;
        let mut adjacency = vec![Vec::new(); n_nodes];
        let mut negative = false;
        for (e, edge) in edges.iter().enumerate() {
            if edge.a >= n_nodes || edge.b >= n_nodes {
                return Err(Error::OutOfRange(format!("edge {e} references a missing node")));
            }
            if !edge.weight.is_finite() {
                return Err(Error::NonFinite(format!("weight of edge {e}")));
            }
            negative |= edge.weight < 0.0;
            adjacency[edge.a].push(e);
            adjacency[edge.b].push(e);
        }
        Ok(Self {
            kind,
            n_stabs,
            rounds,
            n_data,
            edges,
            adjacency,
            negative_weights: negative,
        })
    }

    pub fn n_detectors(&self) -> usize {
        self.n_stabs * self.rounds
    }

    pub fn n_nodes(&self) -> usize {
        self.n_detectors() + 1
    }

    pub fn n_stabilizers(&self) -> usize {
        self.n_stabs
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn n_data(&self) -> usize {
        self.n_data
    }

    pub fn boundary(&self) -> usize {
        self.n_detectors()
    }

    pub fn node(&self, round: usize, stab: usize) -> usize {
        round * self.n_stabs + stab
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_time_edges(&self) -> usize {
        self.edges.iter().filter(|e| matches!(e.support, EdgeSupport::Measurement(_))).count()
    }

    /// Whether every detector reaches the boundary.
    pub fn is_connected(&self) -> bool {
        let sp = self.shortest_paths(self.boundary());
        sp.dist.iter().all(|d| d.is_finite())
    }

    /// Dijkstra from `source`; negative weights count as zero.
    pub fn shortest_paths(&self, source: usize) -> ShortestPaths {
        let n = self.n_nodes();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![None; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapItem(0.0, source));
        while let Some(HeapItem(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &e in &self.adjacency[u] {
                let edge = &self.edges[e];
                let v = if edge.a == u { edge.b } else { edge.a };
                let nd = d + edge.weight.max(0.0);
                if nd < dist[v] {
                    dist[v] = nd;
                    pred[v] = Some(e);
                    heap.push(HeapItem(nd, v));
                }
            }
        }
        ShortestPaths { source, dist, pred }
    }

    /// Data-qubit correction along the stored shortest path to `target`.
    pub fn path_correction(&self, sp: &ShortestPaths, target: usize, out: &mut BitVector) {
        let mut v = target;
        while v != sp.source {
            let Some(e) = sp.pred[v] else { return };
            let edge = &self.edges[e];
            if let EdgeSupport::Data(q) = edge.support {
                out.flip(q);
            }
            v = if edge.a == v { edge.b } else { edge.a };
        }
    }
}

/// Raises the prior of every data edge in proportion to the qubit's score:
/// `p' = clamp(p·(1 + λ·score), ε, 1−ε)`.
pub fn reweight_with_saliency(graph: &DecodingGraph, scores: &[f64], lambda: f64) -> Result<DecodingGraph> {
    check_len(graph.n_data, scores.len())?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::OutOfRange(format!("lambda {lambda} must be finite and non-negative")));
    }
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::OutOfRange(format!("saliency score {s} outside [0, 1]")));
    }
    let edges = graph
        .edges
        .iter()
        .map(|e| match e.support {
            EdgeSupport::Data(q) => {
                let p = clamp_prob(e.prob * (1.0 + lambda * scores[q]));
                Edge {
                    prob: p,
                    weight: log_odds(p),
                    ..e.clone()
                }
            }
            EdgeSupport::Measurement(_) => e.clone(),
        })
        .collect();
    DecodingGraph::from_edges(graph.kind, graph.n_stabs, graph.rounds, graph.n_data, edges)
}
