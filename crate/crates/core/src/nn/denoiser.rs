//! The conditional denoiser.
//!
//! Each syndrome round passes through a shared two-layer 3×3 convolution stack
//! and global average pooling. A gated recurrent unit reads the per-round
//! features in order and its final hidden state is the syndrome feature `c`.
//! The encoded state `h₀ = e_x + e_t + c` then runs through `K` residual
//! layers whose hidden activations are scaled and shifted by controller
//! outputs computed from `c`, with a sigmoid gate on the residual branch.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::bits::BitVector;
use crate::error::{check_len, Error, Result};
use crate::noise::SyndromeHistory;

/// Architecture sizes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    pub d: usize,
    pub label_len: usize,
    pub steps: usize,
    pub hidden: usize,
    pub layers: usize,
    pub conv_channels: [usize; 2],
    pub time_dim: usize,
}

impl DenoiserConfig {
    pub fn new(d: usize, label_len: usize) -> Self {
        Self {
            d,
            label_len,
            steps: crate::diffusion::DEFAULT_STEPS,
            hidden: 128,
            layers: 4,
            conv_channels: [16, 32],
            time_dim: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 3 || self.d % 2 == 0 {
            return Err(Error::InvalidDistance(self.d));
        }
        if self.label_len == 0 || self.steps == 0 || self.hidden == 0 || self.layers == 0 {
            return Err(Error::InvalidArgument("denoiser sizes must be positive".into()));
        }
        if self.conv_channels.contains(&0) || self.time_dim < 2 || self.time_dim % 2 != 0 {
            return Err(Error::InvalidArgument("conv channels must be positive and time_dim even".into()));
        }
        Ok(())
    }

    fn grid_side(&self) -> usize {
        self.d + 1
    }

    /// Names and shapes of every parameter tensor, in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let h = self.hidden;
        let [c1, c2] = self.conv_channels;
        let l = self.label_len;
        let mut v: Vec<(String, Vec<usize>)> = vec![
            ("conv1.w".into(), vec![3, 3, 2, c1]),
            ("conv1.b".into(), vec![c1]),
            ("conv2.w".into(), vec![3, 3, c1, c2]),
            ("conv2.b".into(), vec![c2]),
            ("gru.w_in".into(), vec![c2, 3 * h]),
            ("gru.b_in".into(), vec![3 * h]),
            ("gru.w_hid".into(), vec![h, 3 * h]),
            ("gru.b_hid".into(), vec![3 * h]),
            ("time.w1".into(), vec![self.time_dim, h]),
            ("time.b1".into(), vec![h]),
            ("time.w2".into(), vec![h, h]),
            ("time.b2".into(), vec![h]),
            ("xenc.w".into(), vec![l, h]),
            ("xenc.b".into(), vec![h]),
        ];
        for k in 0..self.layers {
            v.push((format!("layer{k}.w1"), vec![h, h]));
            v.push((format!("layer{k}.b1"), vec![h]));
            v.push((format!("layer{k}.w2"), vec![h, h]));
            v.push((format!("layer{k}.b2"), vec![h]));
            v.push((format!("layer{k}.ctrl.w"), vec![h, 3 * h]));
            v.push((format!("layer{k}.ctrl.b"), vec![3 * h]));
        }
        v.push(("head.w".into(), vec![h, 2 * l]));
        v.push(("head.b".into(), vec![2 * l]));
        v
    }
}

const CONV1_W: usize = 0;
const CONV1_B: usize = 1;
const CONV2_W: usize = 2;
const CONV2_B: usize = 3;
const GRU_W_IN: usize = 4;
const GRU_B_IN: usize = 5;
const GRU_W_HID: usize = 6;
const GRU_B_HID: usize = 7;
const TIME_W1: usize = 8;
const TIME_B1: usize = 9;
const TIME_W2: usize = 10;
const TIME_B2: usize = 11;
const XENC_W: usize = 12;
const XENC_B: usize = 13;
const LAYER_BASE: usize = 14;
const PER_LAYER: usize = 6;

/// Initial bias on the residual gate pre-activation.
pub const GATE_BIAS_INIT: f64 = -2.0;

/// Parameter tensor indices of one modulated layer.
#[derive(Clone, Copy, Debug)]
pub struct LayerIndex {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub ctrl_w: usize,
    pub ctrl_b: usize,
}

/// All trainable weights of the denoiser.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserParams {
    pub config: DenoiserConfig,
    pub tensors: Vec<Tensor>,
    /// Optimizer steps applied so far; zero means the weights are untrained.
    pub trained_steps: usize,
}

/// Sinusoidal embedding of a diffusion step: `[sin(t·ω_i) | cos(t·ω_i)]`.
pub fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut e = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        let a = t as f64 * freq;
        e[i] = a.sin();
        e[half + i] = a.cos();
    }
    e
}

/// Lays histories out channels-last as `[n · r, d+1, d+1, 2]`, shot-major.
pub fn grid_input(histories: &[&SyndromeHistory]) -> Result<Tensor> {
    let Some(first) = histories.first() else {
        return Err(Error::InvalidArgument("no histories".into()));
    };
    let (d, r) = (first.distance(), first.rounds());
    let mut grids = Vec::with_capacity(histories.len());
    for h in histories {
        if h.distance() != d || h.rounds() != r {
            return Err(Error::Shape("histories in one batch must share d and r".into()));
        }
        grids.push(h.to_f64());
    }
    Ok(nchw_to_input(&grids, d + 1, r))
}

/// Converts flattened `[r][2][s][s]` grids to the channels-last network input.
pub(crate) fn nchw_to_input(grids: &[Vec<f64>], side: usize, rounds: usize) -> Tensor {
    let mut data = vec![0.0; grids.len() * rounds * side * side * 2];
    for (i, g) in grids.iter().enumerate() {
        for k in 0..rounds {
            for ch in 0..2 {
                for row in 0..side {
                    for col in 0..side {
                        let src = ((k * 2 + ch) * side + row) * side + col;
                        let dst = ((((i * rounds + k) * side + row) * side) + col) * 2 + ch;
                        data[dst] = g[src];
                    }
                }
            }
        }
    }
    Tensor {
        shape: vec![grids.len() * rounds, side, side, 2],
        data,
    }
}

/// Inverse of [`nchw_to_input`] for one shot's slice of an input-shaped tensor.
pub(crate) fn input_to_nchw(t: &Tensor, shot: usize, side: usize, rounds: usize) -> Vec<f64> {
    let mut out = vec![0.0; rounds * 2 * side * side];
    for k in 0..rounds {
        for ch in 0..2 {
            for row in 0..side {
                for col in 0..side {
                    let dst = ((k * 2 + ch) * side + row) * side + col;
                    let src = ((((shot * rounds + k) * side + row) * side) + col) * 2 + ch;
                    out[dst] = t.data[src];
                }
            }
        }
    }
    out
}

/// Output of one denoiser evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserOutput {
    /// `(class 0, class 1)` logits per bit.
    pub logits: Vec<[f64; 2]>,
    /// Softmax of each pair.
    pub p0: Vec<[f64; 2]>,
}

impl DenoiserOutput {
    pub fn from_logits(flat: &[f64]) -> Self {
        let logits: Vec<[f64; 2]> = flat.chunks(2).map(|p| [p[0], p[1]]).collect();
        let p0 = logits.iter().map(|&pair| softmax_pair(pair)).collect();
        Self { logits, p0 }
    }

    /// P(x₀ᵢ = 1) per bit.
    pub fn p_one(&self) -> Vec<f64> {
        self.p0.iter().map(|p| p[1]).collect()
    }
}

pub fn softmax_pair([a, b]: [f64; 2]) -> [f64; 2] {
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    [ea / (ea + eb), eb / (ea + eb)]
}

/// Per-shot conditioning: syndrome feature and controller outputs for every layer.
#[derive(Clone, Debug)]
pub struct Conditioning {
    /// `[n, H]`.
    pub c: Tensor,
    /// `K` tensors of shape `[n, 3H]` holding `(γ | β | gate pre-activation)`.
    pub controls: Vec<Tensor>,
}

impl DenoiserParams {
    /// Fan-in scaled uniform initialization; controller bias starts at γ = 1,
    /// β = 0 and a closed-leaning gate.
    pub fn init<R: Rng + ?Sized>(config: DenoiserConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let mut tensors = Vec::new();
        for (name, shape) in config.param_shapes() {
            let mut t = Tensor::zeros(&shape);
            if shape.len() > 1 {
                let fan_in: usize = shape[..shape.len() - 1].iter().product();
                let bound = 1.0 / (fan_in as f64).sqrt();
                for v in &mut t.data {
                    *v = rng.random_range(-bound..bound);
                }
            } else if name.ends_with("ctrl.b") {
                t.data[..h].fill(1.0);
                t.data[2 * h..].fill(GATE_BIAS_INIT);
            }
            tensors.push(t);
        }
        Ok(Self {
            config,
            tensors,
            trained_steps: 0,
        })
    }

    pub fn layer(&self, k: usize) -> LayerIndex {
        let b = LAYER_BASE + PER_LAYER * k;
        LayerIndex {
            w1: b,
            b1: b + 1,
            w2: b + 2,
            b2: b + 3,
            ctrl_w: b + 4,
            ctrl_b: b + 5,
        }
    }

    fn head(&self) -> (usize, usize) {
        let b = LAYER_BASE + PER_LAYER * self.config.layers;
        (b, b + 1)
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_fitted(&self) -> bool {
        self.trained_steps > 0
    }

    /// Marks randomly initialized weights as usable for decoding (latency benchmarks).
    pub fn assume_fitted(&mut self) {
        self.trained_steps = self.trained_steps.max(1);
    }

    pub fn check_fitted(&self) -> Result<()> {
        if self.is_fitted() {
            Ok(())
        } else {
            Err(Error::InvalidArgument("denoiser parameters are untrained".into()))
        }
    }

    fn check_history(&self, h: &SyndromeHistory) -> Result<()> {
        if h.distance() != self.config.d {
            return Err(Error::Shape(format!(
                "history has d={} but the model was built for d={}",
                h.distance(),
                self.config.d
            )));
        }
        Ok(())
    }

    // ---- graph builders -------------------------------------------------

    /// Shared conv stack + pooling: `[n·r, s, s, 2]` → `[n·r, F]`.
    pub(crate) fn build_rounds(&self, g: &mut Graph<'_>, grid: Var) -> Result<Var> {
        let (w1, b1, w2, b2) = (g.param(CONV1_W), g.param(CONV1_B), g.param(CONV2_W), g.param(CONV2_B));
        let a = g.conv3x3(grid, w1, b1)?;
        let a = g.relu(a);
        let a = g.conv3x3(a, w2, b2)?;
        let a = g.relu(a);
        g.mean_pool(a)
    }

    /// Recurrent aggregation over rounds; `feats` rows are shot-major `[n·r, F]`.
    pub(crate) fn build_temporal(&self, g: &mut Graph<'_>, feats: Var, n: usize, r: usize) -> Result<Var> {
        if r == 0 {
            return Err(Error::InvalidArgument("temporal aggregation needs at least one round".into()));
        }
        let hsz = self.config.hidden;
        let (w_in, b_in, w_hid, b_hid) = (g.param(GRU_W_IN), g.param(GRU_B_IN), g.param(GRU_W_HID), g.param(GRU_B_HID));
        let mut h = g.input(Tensor::zeros(&[n, hsz]));
        for k in 0..r {
            let x = g.gather_rows(feats, (0..n).map(|i| i * r + k).collect())?;
            h = self.gru_step(g, x, h, (w_in, b_in, w_hid, b_hid))?;
        }
        Ok(h)
    }

    fn gru_step(&self, g: &mut Graph<'_>, x: Var, h: Var, (w_in, b_in, w_hid, b_hid): (Var, Var, Var, Var)) -> Result<Var> {
        let hsz = self.config.hidden;
        let gi = g.linear(x, w_in, b_in)?;
        let gh = g.linear(h, w_hid, b_hid)?;
        let (ir, iz, inn) = (g.slice_cols(gi, 0, hsz)?, g.slice_cols(gi, hsz, hsz)?, g.slice_cols(gi, 2 * hsz, hsz)?);
        let (hr, hz, hn) = (g.slice_cols(gh, 0, hsz)?, g.slice_cols(gh, hsz, hsz)?, g.slice_cols(gh, 2 * hsz, hsz)?);
        let reset = g.add(ir, hr)?;
        let reset = g.sigmoid(reset);
        let update = g.add(iz, hz)?;
        let update = g.sigmoid(update);
        let gated = g.mul(reset, hn)?;
        let cand = g.add(inn, gated)?;
        let cand = g.tanh(cand);
        // h' = (1 − z) ⊙ n + z ⊙ h
        let keep = g.affine(update, -1.0, 1.0);
        let a = g.mul(keep, cand)?;
        let b = g.mul(update, h)?;
        g.add(a, b)
    }

    pub(crate) fn build_controls(&self, g: &mut Graph<'_>, c: Var) -> Result<Vec<Var>> {
        (0..self.config.layers)
            .map(|k| {
                let li = self.layer(k);
                let (w, b) = (g.param(li.ctrl_w), g.param(li.ctrl_b));
                g.linear(c, w, b)
            })
            .collect()
    }

    pub(crate) fn build_time(&self, g: &mut Graph<'_>, temb: Var) -> Result<Var> {
        let (w1, b1, w2, b2) = (g.param(TIME_W1), g.param(TIME_B1), g.param(TIME_W2), g.param(TIME_B2));
        let a = g.linear(temb, w1, b1)?;
        let a = g.relu(a);
        g.linear(a, w2, b2)
    }

    /// `h₀ = e_x + e_t + c`.
    pub(crate) fn build_encode(&self, g: &mut Graph<'_>, x: Var, et: Var, c: Var) -> Result<Var> {
        let (w, b) = (g.param(XENC_W), g.param(XENC_B));
        let ex = g.linear(x, w, b)?;
        let s = g.add(ex, et)?;
        g.add(s, c)
    }

    /// One modulated residual layer given its `[n, 3H]` controller output.
    pub(crate) fn build_layer(&self, g: &mut Graph<'_>, k: usize, h: Var, ctrl: Var) -> Result<Var> {
        let hsz = self.config.hidden;
        let li = self.layer(k);
        let (w1, b1, w2, b2) = (g.param(li.w1), g.param(li.b1), g.param(li.w2), g.param(li.b2));
        let gamma = g.slice_cols(ctrl, 0, hsz)?;
        let beta = g.slice_cols(ctrl, hsz, hsz)?;
        let gate_pre = g.slice_cols(ctrl, 2 * hsz, hsz)?;
        let u = g.linear(h, w1, b1)?;
        let u = g.relu(u);
        let m = g.mul(gamma, u)?;
        let m = g.add(m, beta)?;
        let body = g.linear(m, w2, b2)?;
        let gate = g.sigmoid(gate_pre);
        let delta = g.mul(gate, body)?;
        g.add(h, delta)
    }

    /// Layers and output head from `h₀`; returns `[n, 2L]` logits.
    pub(crate) fn build_head(&self, g: &mut Graph<'_>, h0: Var, ctrls: &[Var]) -> Result<Var> {
        let mut h = h0;
        for (k, &ctrl) in ctrls.iter().enumerate() {
            h = self.build_layer(g, k, h, ctrl)?;
        }
        let (w, b) = self.head();
        let (w, b) = (g.param(w), g.param(b));
        g.linear(h, w, b)
    }

    /// Full forward on a graph for a batch sharing `r`: returns the logits node.
    pub(crate) fn build_forward(
        &self,
        g: &mut Graph<'_>,
        grid: Var,
        n: usize,
        r: usize,
        x_t: &[&BitVector],
        t: &[usize],
    ) -> Result<Var> {
        let feats = self.build_rounds(g, grid)?;
        let c = self.build_temporal(g, feats, n, r)?;
        let ctrls = self.build_controls(g, c)?;
        let temb = self.time_input(t)?;
        let temb = g.input(temb);
        let et = self.build_time(g, temb)?;
        let x = g.input(self.state_input(x_t)?);
        let h0 = self.build_encode(g, x, et, c)?;
        self.build_head(g, h0, &ctrls)
    }

    pub(crate) fn time_input(&self, t: &[usize]) -> Result<Tensor> {
        let dim = self.config.time_dim;
        let mut data = Vec::with_capacity(t.len() * dim);
        for &step in t {
            if step > self.config.steps {
                return Err(Error::OutOfRange(format!("step {step} beyond horizon {}", self.config.steps)));
            }
            data.extend(time_embedding(step, dim));
        }
        Tensor::new(vec![t.len(), dim], data)
    }

    pub(crate) fn state_input(&self, x_t: &[&BitVector]) -> Result<Tensor> {
        let l = self.config.label_len;
        let mut data = Vec::with_capacity(x_t.len() * l);
        for x in x_t {
            check_len(l, x.len())?;
            data.extend(x.to_f64());
        }
        Tensor::new(vec![x_t.len(), l], data)
    }

    // ---- single-shot operations -----------------------------------------

    /// Per-round features `r × F` for one history (grid values may be relaxed reals).
    pub fn encode_rounds(&self, grid: &[f64], rounds: usize) -> Result<Vec<Vec<f64>>> {
        let side = self.config.grid_side();
        check_len(rounds * 2 * side * side, grid.len())?;
        let mut g = Graph::new(&self.tensors);
        let x = g.input(nchw_to_input(&[grid.to_vec()], side, rounds));
        let f = self.build_rounds(&mut g, x)?;
        let v = g.value(f);
        Ok((0..rounds).map(|k| v.row(k).to_vec()).collect())
    }

    /// Final recurrent state after consuming `features` in order.
    pub fn aggregate_temporal(&self, features: &[Vec<f64>]) -> Result<Vec<f64>> {
        if features.is_empty() {
            return Err(Error::InvalidArgument("temporal aggregation needs at least one round".into()));
        }
        let f = self.config.conv_channels[1];
        let mut data = Vec::with_capacity(features.len() * f);
        for row in features {
            check_len(f, row.len())?;
            data.extend_from_slice(row);
        }
        let mut g = Graph::new(&self.tensors);
        let x = g.input(Tensor::new(vec![features.len(), f], data)?);
        let c = self.build_temporal(&mut g, x, 1, features.len())?;
        Ok(g.value(c).data.clone())
    }

    /// `h₀ = e_x(x_t) + e_t(t) + c`.
    pub fn encode_inputs(&self, x_t: &BitVector, t: usize, c: &[f64]) -> Result<Vec<f64>> {
        check_len(self.config.hidden, c.len())?;
        let mut g = Graph::new(&self.tensors);
        let temb = g.input(self.time_input(&[t])?);
        let et = self.build_time(&mut g, temb)?;
        let x = g.input(self.state_input(&[x_t])?);
        let cv = g.input(Tensor::new(vec![1, c.len()], c.to_vec())?);
        let h0 = self.build_encode(&mut g, x, et, cv)?;
        Ok(g.value(h0).data.clone())
    }

    /// Applies modulated layer `k` to `h` under syndrome feature `c`.
    pub fn denoise_layer(&self, k: usize, h: &[f64], c: &[f64]) -> Result<Vec<f64>> {
        let hsz = self.config.hidden;
        check_len(hsz, h.len())?;
        check_len(hsz, c.len())?;
        if k >= self.config.layers {
            return Err(Error::OutOfRange(format!("layer {k} of {}", self.config.layers)));
        }
        let mut g = Graph::new(&self.tensors);
        let cv = g.input(Tensor::new(vec![1, hsz], c.to_vec())?);
        let li = self.layer(k);
        let (w, b) = (g.param(li.ctrl_w), g.param(li.ctrl_b));
        let ctrl = g.linear(cv, w, b)?;
        let hv = g.input(Tensor::new(vec![1, hsz], h.to_vec())?);
        let out = self.build_layer(&mut g, k, hv, ctrl)?;
        let v = g.value(out);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("denoise layer {k}")));
        }
        Ok(v.data.clone())
    }

    /// Logits and clean-state probabilities for one `(x_t, t, history)`.
    pub fn forward(&self, x_t: &BitVector, t: usize, history: &SyndromeHistory) -> Result<DenoiserOutput> {
        self.check_history(history)?;
        let mut g = Graph::new(&self.tensors);
        let grid = g.input(grid_input(&[history])?);
        let logits = self.build_forward(&mut g, grid, 1, history.rounds(), &[x_t], &[t])?;
        let v = g.value(logits);
        if !v.is_finite() {
            return Err(Error::NonFinite("denoiser logits".into()));
        }
        Ok(DenoiserOutput::from_logits(&v.data))
    }

    // ---- batched inference -----------------------------------------------

    /// Syndrome features and controller outputs for shots sharing `r`.
    pub fn condition(&self, histories: &[&SyndromeHistory]) -> Result<Conditioning> {
        for h in histories {
            self.check_history(h)?;
        }
        let mut g = Graph::new(&self.tensors);
        let grid = g.input(grid_input(histories)?);
        let feats = self.build_rounds(&mut g, grid)?;
        let c = self.build_temporal(&mut g, feats, histories.len(), histories[0].rounds())?;
        let ctrls = self.build_controls(&mut g, c)?;
        Ok(Conditioning {
            c: g.value(c).clone(),
            controls: ctrls.iter().map(|&v| g.value(v).clone()).collect(),
        })
    }

    /// Logits `[rows.len(), 2L]` where row `i` uses conditioning row `rows[i]`,
    /// state `x_t[i]` and the shared step `t`.
    pub fn denoise_rows(&self, cond: &Conditioning, rows: &[usize], x_t: &[&BitVector], t: usize) -> Result<Tensor> {
        check_len(rows.len(), x_t.len())?;
        let mut g = Graph::new(&self.tensors);
        let cv = g.input(cond.c.clone());
        let c = g.gather_rows(cv, rows.to_vec())?;
        let mut ctrls = Vec::with_capacity(cond.controls.len());
        for ct in &cond.controls {
            let v = g.input(ct.clone());
            ctrls.push(g.gather_rows(v, rows.to_vec())?);
        }
        let temb = g.input(self.time_input(&[t])?);
        let et1 = self.build_time(&mut g, temb)?;
        let et = g.gather_rows(et1, vec![0; rows.len()])?;
        let x = g.input(self.state_input(x_t)?);
        let h0 = self.build_encode(&mut g, x, et, c)?;
        let logits = self.build_head(&mut g, h0, &ctrls)?;
        let v = g.value(logits);
        if !v.is_finite() {
            return Err(Error::NonFinite("denoiser logits".into()));
        }
        Ok(v.clone())
    }

    /// Evaluates `f = Σ_j weights_j · logits_j` at `(x_t, t)` for each relaxed
    /// grid and returns `f` together with `∂f/∂grid` in the grid's own layout.
    pub fn margin_with_input_grad(
        &self,
        grids: &[Vec<f64>],
        rounds: usize,
        x_t: &BitVector,
        t: usize,
        weights: &[f64],
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let side = self.config.grid_side();
        let l2 = 2 * self.config.label_len;
        check_len(l2, weights.len())?;
        for gr in grids {
            check_len(rounds * 2 * side * side, gr.len())?;
        }
        let n = grids.len();
        let mut g = Graph::new(&self.tensors);
        let grid = g.leaf(nchw_to_input(grids, side, rounds));
        let xs = vec![x_t; n];
        let ts = vec![t; n];
        let logits = self.build_forward(&mut g, grid, n, rounds, &xs, &ts)?;
        let w: Vec<f64> = (0..n).flat_map(|_| weights.iter().copied()).collect();
        let f = g.weighted_sum(logits, w)?;
        let grads = g.backward(f)?;
        let lv = g.value(logits);
        let values = (0..n)
            .map(|i| lv.row(i).iter().zip(weights).map(|(a, b)| a * b).sum())
            .collect();
        let gt = grads
            .get(grid)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&g.value(grid).shape));
        let per_shot = (0..n).map(|i| input_to_nchw(&gt, i, side, rounds)).collect();
        Ok((values, per_shot))
    }
}
