//! Central finite-difference checks of the analytic parameter gradients.

use rand::Rng;
use serde::Serialize;

use super::denoiser::{grid_input, DenoiserParams};
use super::graph::Graph;
use super::tensor::Tensor;
use super::train::TrainItem;
use crate::bits::BitVector;
use crate::error::{Error, Result};
use crate::noise::SyndromeHistory;

/// Denominator floor for relative errors of near-zero gradients.
pub const GRAD_FLOOR: f64 = 1e-6;

pub const FD_STEP: f64 = 1e-3;


#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckEntry {
    pub param: String,
    pub group: &'static str,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Summed (unnormalized) cross-entropy over items that share a history length.
struct Eval {
    loss: f64,
    pattern: Vec<bool>,
    grads: Option<Vec<Tensor>>,
}

fn summed_loss(tensors: &[Tensor], params: &DenoiserParams, items: &[TrainItem<'_>], with_grad: bool) -> Result<Eval> {
    if items.is_empty() || items.iter().any(|it| it.history.rounds() != items[0].history.rounds()) {
        return Err(Error::InvalidArgument("gradient check needs a non-empty batch with one history length".into()));
    }
    let histories: Vec<&SyndromeHistory> = items.iter().map(|it| it.history).collect();
    let xs: Vec<&BitVector> = items.iter().map(|it| &it.x_t).collect();
    let ts: Vec<usize> = items.iter().map(|it| it.t).collect();
    let targets: Vec<u8> = items.iter().flat_map(|it| it.x0.as_slice().iter().copied()).collect();
    let mut g = Graph::new(tensors);
    let grid = g.input(grid_input(&histories)?);
    let logits = params.build_forward(&mut g, grid, items.len(), histories[0].rounds(), &xs, &ts)?;
    let loss = g.cross_entropy(logits, targets, 1.0)?;
    let mut eval = Eval {
        loss: g.value(loss).data[0],
        pattern: g.relu_pattern(),
        grads: None,
    };
    if with_grad {
        let grads = g.backward(loss)?;
        let mut out: Vec<Tensor> = tensors.iter().map(|t| Tensor::zeros(&t.shape)).collect();
        grads.accumulate_params(&mut out);
        eval.grads = Some(out);
    }
    Ok(eval)
}

/// Parameter group used to stratify the sampled coordinates.
pub fn param_group(params: &DenoiserParams, tensor: usize, index: usize) -> &'static str {
    let names = params.config.param_shapes();
    let name = names[tensor].0.as_str();
    let h = params.config.hidden;
    if name.starts_with("conv") {
        "conv"
    } else if name.starts_with("gru") {
        "recurrent"
    } else if name.ends_with("ctrl.w") || name.ends_with("ctrl.b") {
        // columns [γ | β | gate]
        let col = index % (3 * h);
        if col >= 2 * h {
            "gate"
        } else {
            "controller"
        }
    } else if name.starts_with("head") {
        "head"
    } else {
        "body"
    }
}

pub const GROUPS: [&str; 6] = ["conv", "recurrent", "controller", "gate", "head", "body"];

/// Draws `n` distinct `(tensor, index)` coordinates spread evenly over [`GROUPS`].
pub fn sample_coordinates<R: Rng + ?Sized>(params: &DenoiserParams, n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut pools: Vec<Vec<(usize, usize)>> = vec![Vec::new(); GROUPS.len()];
    for (ti, t) in params.tensors.iter().enumerate() {
        for i in 0..t.len() {
            let g = param_group(params, ti, i);
            pools[GROUPS.iter().position(|x| *x == g).unwrap()].push((ti, i));
        }
    }
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    while out.len() < n && pools.iter().any(|p| !p.is_empty()) {
        let pool = &mut pools[k % GROUPS.len()];
        if !pool.is_empty() {
            let j = rng.random_range(0..pool.len());
            out.push(pool.swap_remove(j));
        }
        k += 1;
    }
    out
}

/// Compares analytic gradients with central differences of step `h`.
/// Coordinates whose stencil changes the sign of any ReLU input are not
/// differentiable within the stencil and are returned as `None`.
pub fn finite_difference_check(
    params: &DenoiserParams,
    items: &[TrainItem<'_>],
    coords: &[(usize, usize)],
    h: f64,
) -> Result<Vec<Option<GradCheckEntry>>> {
    let base = summed_loss(&params.tensors, params, items, true)?;
    let grads = base.grads.expect("gradients requested");
    let names = params.config.param_shapes();
    let mut tensors = params.tensors.clone();
    let mut out = Vec::with_capacity(coords.len());
    for &(ti, i) in coords {
        let orig = tensors[ti].data[i];
        tensors[ti].data[i] = orig + h;
        let up = summed_loss(&tensors, params, items, false)?;
        tensors[ti].data[i] = orig - h;
        let down = summed_loss(&tensors, params, items, false)?;
        tensors[ti].data[i] = orig;
        if up.pattern != base.pattern || down.pattern != base.pattern {
            out.push(None);
            continue;
        }
        let numeric = (up.loss - down.loss) / (2.0 * h);
        let analytic = grads[ti].data[i];
        out.push(Some(GradCheckEntry {
            param: names[ti].0.clone(),
            group: param_group(params, ti, i),
            index: i,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        }));
    }
    Ok(out)
}
