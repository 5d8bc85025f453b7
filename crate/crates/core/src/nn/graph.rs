//! Reverse-mode automatic differentiation over batched tensors.
//!
//! A [`Graph`] records every operation of a forward pass as a node. Parameters
//! are borrowed from the caller's store rather than copied. [`Graph::backward`]
//! walks the nodes in reverse and accumulates gradients into every node that
//! depends on a parameter or on a differentiable leaf.

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Conv3x3 {
        x: Var,
        w: Var,
        b: Var,
        cols: Vec<f64>,
        dims: ConvDims,
    },
    MeanPool {
        x: Var,
        groups: usize,
        per_group: usize,
    },
    GatherRows(Var, Vec<usize>),
    SliceCols(Var, usize),
    Sum(Var),
    WeightedSum(Var, Vec<f64>),
    CrossEntropy {
        logits: Var,
        probs: Vec<f64>,
        targets: Vec<u8>,
        scale: f64,
    },
}

#[derive(Clone, Copy, Debug)]
struct ConvDims {
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Computation tape; `'p` is the lifetime of the borrowed parameter store.
pub struct Graph<'p> {
    params: &'p [Tensor],
    param_nodes: Vec<Option<Var>>,
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    param_nodes: Vec<Option<Var>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].as_ref()
    }

    /// Gradient for parameter `i`, or `None` if it did not reach the root.
    pub fn param(&self, i: usize) -> Option<&Tensor> {
        self.param_nodes[i].and_then(|v| self.get(v))
    }

    /// Adds every parameter gradient into `acc`, which must match the store's shapes.
    pub fn accumulate_params(&self, acc: &mut [Tensor]) {
        for (i, slot) in acc.iter_mut().enumerate() {
            if let Some(g) = self.param(i) {
                slot.add_assign(g);
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p [Tensor]) -> Self {
        Self {
            params,
            param_nodes: vec![None; params.len()],
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match self.nodes[v.0].op {
            Op::Param(i) => &self.params[i],
            _ => &self.nodes[v.0].value,
        }
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    /// A constant input; no gradient flows into it.
    /// Sign pattern of every ReLU input on the tape; used to detect when a
    /// perturbation crosses a kink.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Relu(x) = node.op {
                out.extend(self.value(x).data.iter().map(|&v| v > 0.0));
            }
        }
        out
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input, false)
    }

    /// A differentiable input whose gradient can be read back after backward.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Node for parameter `i` of the store; repeated calls share one node.
    pub fn param(&mut self, i: usize) -> Var {
        if let Some(v) = self.param_nodes[i] {
            return v;
        }
        let v = self.push(Tensor::zeros(&[0]), Op::Param(i), true);
        self.param_nodes[i] = Some(v);
        v
    }

    fn shape_err(what: &str, a: &[usize], b: &[usize]) -> Error {
        Error::Shape(format!("{what}: incompatible shapes {a:?} and {b:?}"))
    }

    /// `[n, k] · [k, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape.len() != 2 || bv.shape.len() != 2 || av.shape[1] != bv.shape[0] {
            return Err(Self::shape_err("matmul", &av.shape, &bv.shape));
        }
        let (n, k, m) = (av.shape[0], av.shape[1], bv.shape[1]);
        let mut out = vec![0.0; n * m];
        gemm(n, k, m, &av.data, (k, 1), &bv.data, (m, 1), 0.0, &mut out);
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(Tensor { shape: vec![n, m], data: out }, Op::MatMul(a, b), tracked))
    }

    /// Adds a row vector `[m]` to every row of `[n, m]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        let m = xv.cols();
        if bv.len() != m {
            return Err(Self::shape_err("add_bias", &xv.shape, &bv.shape));
        }
        let mut out = xv.clone();
        for row in out.data.chunks_mut(m) {
            for (o, bb) in row.iter_mut().zip(&bv.data) {
                *o += bb;
            }
        }
        let tracked = self.tracked(x) || self.tracked(b);
        Ok(self.push(out, Op::AddBias(x, b), tracked))
    }

    /// `x · w + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    fn zip_with(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape != bv.shape {
            return Err(Self::shape_err(what, &av.shape, &bv.shape));
        }
        Ok(Tensor {
            shape: av.shape.clone(),
            data: av.data.iter().zip(&bv.data).map(|(x, y)| f(*x, *y)).collect(),
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "add", |x, y| x + y)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(out, Op::Add(a, b), tracked))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "mul", |x, y| x * y)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(out, Op::Mul(a, b), tracked))
    }

    /// `scale · x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let xv = self.value(x);
        let out = Tensor {
            shape: xv.shape.clone(),
            data: xv.data.iter().map(|v| scale * v + shift).collect(),
        };
        let tracked = self.tracked(x);
        self.push(out, Op::Affine(x, scale), tracked)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let xv = self.value(x);
        let out = Tensor {
            shape: xv.shape.clone(),
            data: xv.data.iter().map(|&v| f(v)).collect(),
        };
        let tracked = self.tracked(x);
        self.push(out, op, tracked)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    /// Same-padded 3×3 convolution over channels-last input `[n, h, w, cin]`
    /// with weights `[3, 3, cin, cout]` and bias `[cout]`.
    pub fn conv3x3(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.shape.len() != 4 || wv.shape.len() != 4 || wv.shape[..3] != [3, 3, xv.shape[3]] || bv.len() != wv.shape[3] {
            return Err(Self::shape_err("conv3x3", &xv.shape, &wv.shape));
        }
        let dims = ConvDims {
            n: xv.shape[0],
            h: xv.shape[1],
            w: xv.shape[2],
            cin: xv.shape[3],
            cout: wv.shape[3],
        };
        let ConvDims { n, h, w: wd, cin, cout } = dims;
        let patch = 9 * cin;
        let rows = n * h * wd;
        let mut cols = vec![0.0; rows * patch];
        for img in 0..n {
            for i in 0..h {
                for j in 0..wd {
                    let r = (img * h + i) * wd + j;
                    let dst = &mut cols[r * patch..(r + 1) * patch];
                    for ki in 0..3 {
                        let ii = i as isize + ki as isize - 1;
                        if ii < 0 || ii >= h as isize {
                            continue;
                        }
                        for kj in 0..3 {
                            let jj = j as isize + kj as isize - 1;
                            if jj < 0 || jj >= wd as isize {
                                continue;
                            }
                            let src = ((img * h + ii as usize) * wd + jj as usize) * cin;
                            let off = (ki * 3 + kj) * cin;
                            dst[off..off + cin].copy_from_slice(&xv.data[src..src + cin]);
                        }
                    }
                }
            }
        }
        let mut out = vec![0.0; rows * cout];
        for row in out.chunks_mut(cout) {
            row.copy_from_slice(&bv.data);
        }
        gemm(rows, patch, cout, &cols, (patch, 1), &wv.data, (cout, 1), 1.0, &mut out);
        let tracked = self.tracked(x) || self.tracked(w) || self.tracked(b);
        Ok(self.push(
            Tensor {
                shape: vec![n, h, wd, cout],
                data: out,
            },
            Op::Conv3x3 { x, w, b, cols, dims },
            tracked,
        ))
    }

    /// Averages `[n, h, w, c]` over the spatial axes, giving `[n, c]`.
    pub fn mean_pool(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape.len() != 4 {
            return Err(Error::Shape(format!("mean_pool expects rank 4, got {:?}", xv.shape)));
        }
        let (n, c) = (xv.shape[0], xv.shape[3]);
        let per_group = xv.shape[1] * xv.shape[2];
        let mut out = vec![0.0; n * c];
        for img in 0..n {
            let o = &mut out[img * c..(img + 1) * c];
            for p in 0..per_group {
                let src = &xv.data[(img * per_group + p) * c..(img * per_group + p + 1) * c];
                for (a, b) in o.iter_mut().zip(src) {
                    *a += b;
                }
            }
            for a in o.iter_mut() {
                *a /= per_group as f64;
            }
        }
        let tracked = self.tracked(x);
        Ok(self.push(
            Tensor { shape: vec![n, c], data: out },
            Op::MeanPool { x, groups: n, per_group },
            tracked,
        ))
    }

    /// Selects rows of a matrix (indices may repeat).
    pub fn gather_rows(&mut self, x: Var, idx: Vec<usize>) -> Result<Var> {
        let xv = self.value(x);
        let (rows, m) = (xv.rows(), xv.cols());
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::Shape(format!("gather_rows: index {bad} out of {rows} rows")));
        }
        let mut out = Vec::with_capacity(idx.len() * m);
        for &i in &idx {
            out.extend_from_slice(xv.row(i));
        }
        let tracked = self.tracked(x);
        Ok(self.push(
            Tensor {
                shape: vec![idx.len(), m],
                data: out,
            },
            Op::GatherRows(x, idx),
            tracked,
        ))
    }

    /// Columns `start .. start + len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let m = xv.cols();
        if start + len > m {
            return Err(Error::Shape(format!("slice_cols: {start}+{len} exceeds {m} columns")));
        }
        let n = xv.rows();
        let mut out = Vec::with_capacity(n * len);
        for i in 0..n {
            out.extend_from_slice(&xv.row(i)[start..start + len]);
        }
        let tracked = self.tracked(x);
        Ok(self.push(Tensor { shape: vec![n, len], data: out }, Op::SliceCols(x, start), tracked))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        let tracked = self.tracked(x);
        self.push(Tensor::scalar(s), Op::Sum(x), tracked)
    }

    /// `Σ weights ⊙ x` with constant weights.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<f64>) -> Result<Var> {
        let xv = self.value(x);
        if weights.len() != xv.len() {
            return Err(Error::Shape(format!("weighted_sum: {} weights for {} values", weights.len(), xv.len())));
        }
        let s = xv.data.iter().zip(&weights).map(|(a, b)| a * b).sum();
        let tracked = self.tracked(x);
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum(x, weights), tracked))
    }

    /// `scale · Σ CE` over bits, where `logits` is `[n, 2L]` holding one
    /// `(class 0, class 1)` pair per bit and `targets` has `n · L` entries.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<u8>, scale: f64) -> Result<Var> {
        let lv = self.value(logits);
        if lv.len() != 2 * targets.len() {
            return Err(Error::Shape(format!(
                "cross_entropy: {} logits for {} targets",
                lv.len(),
                targets.len()
            )));
        }
        let mut probs = Vec::with_capacity(lv.len());
        let mut total = 0.0;
        for (pair, &y) in lv.data.chunks(2).zip(&targets) {
            let m = pair[0].max(pair[1]);
            let e0 = (pair[0] - m).exp();
            let e1 = (pair[1] - m).exp();
            let lse = m + (e0 + e1).ln();
            total += lse - pair[y as usize];
            probs.push(e0 / (e0 + e1));
            probs.push(e1 / (e0 + e1));
        }
        let tracked = self.tracked(logits);
        Ok(self.push(
            Tensor::scalar(scale * total),
            Op::CrossEntropy {
                logits,
                probs,
                targets,
                scale,
            },
            tracked,
        ))
    }

    /// Reverse-mode sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = self.value(root);
        if rv.len() != 1 {
            return Err(Error::Shape(format!("backward needs a scalar root, got {:?}", rv.shape)));
        }
        if !rv.data[0].is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::filled(&rv.shape, 1.0));
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient at node {idx}")));
            }
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            nodes: grads,
            param_nodes: self.param_nodes.clone(),
        })
    }

    fn slot<'a>(&self, grads: &'a mut [Option<Tensor>], v: Var) -> Option<&'a mut Tensor> {
        if !self.tracked(v) {
            return None;
        }
        let shape = &self.value(v).shape;
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(shape)))
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Input | Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (n, k, m) = (av.shape[0], av.shape[1], bv.shape[1]);
                if let Some(ga) = self.slot(grads, *a) {
                    // dA += dY · Bᵀ
                    gemm(n, m, k, &g.data, (m, 1), &bv.data, (1, m), 1.0, &mut ga.data);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    // dB += Aᵀ · dY
                    gemm(k, n, m, &av.data, (1, k), &g.data, (m, 1), 1.0, &mut gb.data);
                }
            }
            Op::AddBias(x, b) => {
                if let Some(gx) = self.slot(grads, *x) {
                    gx.add_assign(g);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    let m = gb.len();
                    for row in g.data.chunks(m) {
                        for (o, v) in gb.data.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(gv) = self.slot(grads, v) {
                        gv.add_assign(g);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, gg), y) in ga.data.iter_mut().zip(&g.data).zip(&bv.data) {
                        *o += gg * y;
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for ((o, gg), x) in gb.data.iter_mut().zip(&g.data).zip(&av.data) {
                        *o += gg * x;
                    }
                }
            }
            Op::Affine(x, scale) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for (o, gg) in gx.data.iter_mut().zip(&g.data) {
                        *o += scale * gg;
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = &node.value.data;
                if let Some(gx) = self.slot(grads, *x) {
                    for ((o, gg), yy) in gx.data.iter_mut().zip(&g.data).zip(y) {
                        *o += gg * yy * (1.0 - yy);
                    }
                }
            }
            Op::Tanh(x) => {
                let y = &node.value.data;
                if let Some(gx) = self.slot(grads, *x) {
                    for ((o, gg), yy) in gx.data.iter_mut().zip(&g.data).zip(y) {
                        *o += gg * (1.0 - yy * yy);
                    }
                }
            }
            Op::Relu(x) => {
                let y = &node.value.data;
                if let Some(gx) = self.slot(grads, *x) {
                    for ((o, gg), yy) in gx.data.iter_mut().zip(&g.data).zip(y) {
                        if *yy > 0.0 {
                            *o += gg;
                        }
                    }
                }
            }
            Op::Conv3x3 { x, w, b, cols, dims } => self.conv_backward(*x, *w, *b, cols, *dims, g, grads),
            Op::MeanPool { x, groups, per_group } => {
                if let Some(gx) = self.slot(grads, *x) {
                    let c = g.len() / groups;
                    let inv = 1.0 / *per_group as f64;
                    for img in 0..*groups {
                        let src = &g.data[img * c..(img + 1) * c];
                        for p in 0..*per_group {
                            let dst = &mut gx.data[(img * per_group + p) * c..(img * per_group + p + 1) * c];
                            for (o, v) in dst.iter_mut().zip(src) {
                                *o += v * inv;
                            }
                        }
                    }
                }
            }
            Op::GatherRows(x, idx) => {
                if let Some(gx) = self.slot(grads, *x) {
                    let m = gx.cols();
                    for (k, &i) in idx.iter().enumerate() {
                        let src = &g.data[k * m..(k + 1) * m];
                        for (o, v) in gx.data[i * m..(i + 1) * m].iter_mut().zip(src) {
                            *o += v;
                        }
                    }
                }
            }
            Op::SliceCols(x, start) => {
                if let Some(gx) = self.slot(grads, *x) {
                    let m = gx.cols();
                    let len = g.cols();
                    for i in 0..g.rows() {
                        let dst = &mut gx.data[i * m + start..i * m + start + len];
                        for (o, v) in dst.iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    let s = g.data[0];
                    for o in gx.data.iter_mut() {
                        *o += s;
                    }
                }
            }
            Op::WeightedSum(x, weights) => {
                if let Some(gx) = self.slot(grads, *x) {
                    let s = g.data[0];
                    for (o, wgt) in gx.data.iter_mut().zip(weights) {
                        *o += s * wgt;
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                probs,
                targets,
                scale,
            } => {
                if let Some(gl) = self.slot(grads, *logits) {
                    let s = g.data[0] * scale;
                    for (k, &y) in targets.iter().enumerate() {
                        for c in 0..2 {
                            let onehot = if c == y as usize { 1.0 } else { 0.0 };
                            gl.data[2 * k + c] += s * (probs[2 * k + c] - onehot);
                        }
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_backward(
        &self,
        x: Var,
        w: Var,
        b: Var,
        cols: &[f64],
        dims: ConvDims,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) {
        let ConvDims { n, h, w: wd, cin, cout } = dims;
        let patch = 9 * cin;
        let rows = n * h * wd;
        if let Some(gb) = self.slot(grads, b) {
            for row in g.data.chunks(cout) {
                for (o, v) in gb.data.iter_mut().zip(row) {
                    *o += v;
                }
            }
        }
        if let Some(gw) = self.slot(grads, w) {
            // dW += colsᵀ · dY
            gemm(patch, rows, cout, cols, (1, patch), &g.data, (cout, 1), 1.0, &mut gw.data);
        }
        if self.tracked(x) {
            let wv = self.value(w);
            let mut dcols = vec![0.0; rows * patch];
            gemm(rows, cout, patch, &g.data, (cout, 1), &wv.data, (1, cout), 0.0, &mut dcols);
            let gx = self.slot(grads, x).expect("tracked");
            for img in 0..n {
                for i in 0..h {
                    for j in 0..wd {
                        let r = (img * h + i) * wd + j;
                        let src = &dcols[r * patch..(r + 1) * patch];
                        for ki in 0..3 {
                            let ii = i as isize + ki as isize - 1;
                            if ii < 0 || ii >= h as isize {
                                continue;
                            }
                            for kj in 0..3 {
                                let jj = j as isize + kj as isize - 1;
                                if jj < 0 || jj >= wd as isize {
                                    continue;
                                }
                                let dst = ((img * h + ii as usize) * wd + jj as usize) * cin;
                                let off = (ki * 3 + kj) * cin;
                                for c in 0..cin {
                                    gx.data[dst + c] += src[off + c];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn sum_gradient_is_ones() {
        let params = vec![t(&[2, 2], &[1.0, -2.0, 3.0, 0.5])];
        let mut g = Graph::new(&params);
        let w = g.param(0);
        let loss = g.sum(w);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.param(0).unwrap().data, vec![1.0; 4]);
    }

    #[test]
    fn square_gradient_is_twice_w() {
        let params = vec![t(&[3], &[1.0, -2.0, 3.0])];
        let mut g = Graph::new(&params);
        let w = g.param(0);
        let sq = g.mul(w, w).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.param(0).unwrap().data, vec![2.0, -4.0, 6.0]);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let params = vec![t(&[2], &[1.0, 2.0])];
        let mut g = Graph::new(&params);
        let w = g.param(0);
        assert!(matches!(g.backward(w), Err(Error::Shape(_))));
    }

    #[test]
    fn nan_loss_is_rejected() {
        let params = vec![t(&[1], &[f64::NAN])];
        let mut g = Graph::new(&params);
        let w = g.param(0);
        let loss = g.sum(w);
        assert!(matches!(g.backward(loss), Err(Error::NonFinite(_))));
    }

    #[test]
    fn inputs_receive_no_gradient() {
        let params = vec![t(&[2, 1], &[1.0, 2.0])];
        let mut g = Graph::new(&params);
        let x = g.input(t(&[1, 2], &[3.0, 4.0]));
        let w = g.param(0);
        let y = g.matmul(x, w).unwrap();
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(x).is_none());
        assert_eq!(grads.param(0).unwrap().data, vec![3.0, 4.0]);
    }

    #[test]
    fn shape_errors_surface() {
        let params = vec![t(&[3, 1], &[1.0, 2.0, 3.0])];
        let mut g = Graph::new(&params);
        let x = g.input(t(&[1, 2], &[3.0, 4.0]));
        let w = g.param(0);
        assert!(g.matmul(x, w).is_err());
        assert!(g.add(x, w).is_err());
        assert!(g.slice_cols(x, 1, 2).is_err());
        assert!(g.gather_rows(x, vec![1]).is_err());
    }

    #[test]
    fn cross_entropy_limits() {
        let params: Vec<Tensor> = vec![];
        let mut g = Graph::new(&params);
        let uniform = g.input(t(&[2, 2], &[0.0, 0.0, 1.5, 1.5]));
        let ce = g.cross_entropy(uniform, vec![0, 1], 0.5).unwrap();
        assert!((g.value(ce).data[0] - std::f64::consts::LN_2).abs() < 1e-15);
        let sharp = g.input(t(&[1, 4], &[20.0, -20.0, -20.0, 20.0]));
        let ce = g.cross_entropy(sharp, vec![0, 1], 0.5).unwrap();
        assert!(g.value(ce).data[0] < 1e-8);
    }

    #[test]
    fn conv_matches_direct_sum() {
        // 1 image, 3x3 spatial, 2 in channels, 1 out channel
        let x: Vec<f64> = (0..18).map(|v| (v as f64 * 0.37).sin()).collect();
        let w: Vec<f64> = (0..18).map(|v| (v as f64 * 0.91).cos()).collect();
        let params = vec![t(&[3, 3, 2, 1], &w), t(&[1], &[0.25])];
        let mut g = Graph::new(&params);
        let xv = g.input(t(&[1, 3, 3, 2], &x));
        let (wv, bv) = (g.param(0), g.param(1));
        let y = g.conv3x3(xv, wv, bv).unwrap();
        let out = g.value(y).clone();
        for i in 0..3i32 {
            for j in 0..3i32 {
                let mut want = 0.25;
                for ki in 0..3i32 {
                    for kj in 0..3i32 {
                        let (ii, jj) = (i + ki - 1, j + kj - 1);
                        if !(0..3).contains(&ii) || !(0..3).contains(&jj) {
                            continue;
                        }
                        for c in 0..2 {
                            want += x[((ii * 3 + jj) * 2 + c) as usize] * w[((ki * 3 + kj) * 2 + c) as usize];
                        }
                    }
                }
                assert!((out.data[(i * 3 + j) as usize] - want).abs() < 1e-12);
            }
        }
    }
}
