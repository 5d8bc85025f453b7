//! Minimum-weight perfect matching of defects with boundary, by exact subset
//! dynamic programming for small defect counts.

use serde::Serialize;

use super::graph::{build_decoding_graph, DecodingGraph};
use crate::bits::BitVector;
use crate::code::{ObservableMode, PauliKind, SurfaceCode};
use crate::error::{check_len, Error, Result};
use crate::noise::{NoiseModel, SyndromeHistory};

/// Largest defect count solved exactly.
pub const MAX_EXACT_DEFECTS: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchResult {
    pub correction: BitVector,
    pub weight: f64,
    pub exact: bool,
    /// Pairs `(i, Some(j))` of matched defect positions or `(i, None)` for boundary.
    pub pairs: Vec<(usize, Option<usize>)>,
}

/// Pairing cost matrix: `pair[i][j]` between defects and `bnd[i]` to the boundary.
#[derive(Clone, Debug)]
pub struct CostMatrix {
    pub pair: Vec<Vec<f64>>,
    pub bnd: Vec<f64>,
}

/// Exact minimum-cost resolution of every defect (pair or boundary).
pub fn min_weight_matching(costs: &CostMatrix) -> (f64, Vec<(usize, Option<usize>)>) {
    let k = costs.bnd.len();
    let full = (1usize << k) - 1;
    let mut best = vec![f64::INFINITY; 1 << k];
    let mut choice = vec![(0usize, None); 1 << k];
    best[0] = 0.0;
    for mask in 1..=full {
        let i = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << i);
        let mut b = best[rest] + costs.bnd[i];
        let mut c = (i, None);
        let mut others = rest;
        while others != 0 {
            let j = others.trailing_zeros() as usize;
            others &= others - 1;
            let v = best[rest & !(1 << j)] + costs.pair[i][j];
            if v < b {
                b = v;
                c = (i, Some(j));
            }
        }
        best[mask] = b;
        choice[mask] = c;
    }
    let mut pairs = Vec::new();
    let mut mask = full;
    while mask != 0 {
        let (i, j) = choice[mask];
        pairs.push((i, j));
        mask &= !(1 << i);
        if let Some(j) = j {
            mask &= !(1 << j);
        }
    }
    (best[full], pairs)
}

/// Repeatedly commits the cheapest remaining pair or boundary match.
pub fn greedy_matching(costs: &CostMatrix) -> (f64, Vec<(usize, Option<usize>)>) {
    let k = costs.bnd.len();
    let mut options: Vec<(f64, usize, Option<usize>)> = Vec::new();
    for i in 0..k {
        options.push((costs.bnd[i], i, None));
        for j in i + 1..k {
            options.push((costs.pair[i][j], i, Some(j)));
        }
    }
    options.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut used = vec![false; k];
    let mut total = 0.0;
    let mut pairs = Vec::new();
    for (w, i, j) in options {
        if used[i] || j.is_some_and(|j| used[j]) {
            continue;
        }
        used[i] = true;
        if let Some(j) = j {
            used[j] = true;
        }
        total += w;
        pairs.push((i, j));
    }
    (total, pairs)
}

/// Matches `defects` (detector node indices) on `graph`.
pub fn mwpm_decode(graph: &DecodingGraph, defects: &[usize]) -> Result<MatchResult> {
    let mut seen = vec![false; graph.n_detectors()];
    for &v in defects {
        if v >= graph.n_detectors() {
            return Err(Error::OutOfRange(format!("defect node {v} is not a detector of the graph")));
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(Error::InvalidArgument(format!("defect node {v} listed twice")));
        }
    }
    let mut correction = BitVector::zeros(graph.n_data());
    if defects.is_empty() {
        return Ok(MatchResult {
            correction,
            weight: 0.0,
            exact: true,
            pairs: Vec::new(),
        });
    }
    let paths: Vec<_> = defects.iter().map(|&v| graph.shortest_paths(v)).collect();
    let costs = CostMatrix {
        pair: paths.iter().map(|sp| defects.iter().map(|&v| sp.dist[v]).collect()).collect(),
        bnd: paths.iter().map(|sp| sp.dist[graph.boundary()]).collect(),
    };
    if costs.bnd.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidArgument("a defect cannot reach the boundary".into()));
    }
    let exact = defects.len() <= MAX_EXACT_DEFECTS;
    let (weight, pairs) = if exact {
        min_weight_matching(&costs)
    } else {
        greedy_matching(&costs)
    };
    for &(i, j) in &pairs {
        let target = j.map_or(graph.boundary(), |j| defects[j]);
        graph.path_correction(&paths[i], target, &mut correction);
    }
    Ok(MatchResult {
        correction,
        weight,
        exact,
        pairs,
    })
}

/// Matching decoder for memory-experiment histories.
#[derive(Clone, Debug)]
pub struct MwpmDecoder {
    code: SurfaceCode,
    mode: ObservableMode,
    /// Graph over Z checks (predicts bit 0) and, in dual mode, over X checks.
    z_graph: DecodingGraph,
    x_graph: Option<DecodingGraph>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MwpmOutput {
    pub label: BitVector,
    pub weight: f64,
    pub exact: bool,
}

impl MwpmDecoder {
    pub fn new(code: &SurfaceCode, noise: &NoiseModel, rounds: usize, mode: ObservableMode) -> Result<Self> {
        let z_graph = build_decoding_graph(code, noise, rounds, PauliKind::Z)?;
        let x_graph = match mode {
            ObservableMode::Single => None,
            ObservableMode::Dual => Some(build_decoding_graph(code, noise, rounds, PauliKind::X)?),
        };
        Ok(Self {
            code: code.clone(),
            mode,
            z_graph,
            x_graph,
        })
    }

    pub fn z_graph(&self) -> &DecodingGraph {
        &self.z_graph
    }

    pub fn x_graph(&self) -> Option<&DecodingGraph> {
        self.x_graph.as_ref()
    }

    /// Same decoder with its graphs replaced (e.g. after reweighting).
    pub fn with_graphs(&self, z_graph: DecodingGraph, x_graph: Option<DecodingGraph>) -> Self {
        Self {
            code: self.code.clone(),
            mode: self.mode,
            z_graph,
            x_graph,
        }
    }

    fn defects(graph: &DecodingGraph, events: &[(BitVector, BitVector)]) -> Vec<usize> {
        let mut out = Vec::new();
        for (k, (ex, ez)) in events.iter().enumerate() {
            let bits = match graph.kind {
                PauliKind::X => ex,
                PauliKind::Z => ez,
            };
            out.extend(bits.support().into_iter().map(|i| graph.node(k, i)));
        }
        out
    }

    pub fn decode(&self, history: &SyndromeHistory) -> Result<MwpmOutput> {
        check_len(self.z_graph.rounds(), history.rounds())?;
        if history.distance() != self.code.distance() {
            return Err(Error::Shape("history distance does not match the decoder".into()));
        }
        let events = history.events(&self.code);
        let z = mwpm_decode(&self.z_graph, &Self::defects(&self.z_graph, &events))?;
        let mut bits = vec![self.code.logical_z().dot(&z.correction)?];
        let (mut weight, mut exact) = (z.weight, z.exact);
        if let Some(xg) = &self.x_graph {
            let x = mwpm_decode(xg, &Self::defects(xg, &events))?;
            bits.push(self.code.logical_x().dot(&x.correction)?);
            weight += x.weight;
            exact &= x.exact;
        }
        Ok(MwpmOutput {
            label: BitVector::from_bools(bits),
            weight,
            exact,
        })
    }
}
