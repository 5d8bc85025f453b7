//! Bitwise cross-entropy training with an adaptive-moment optimizer and a
//! short-to-long curriculum over syndrome-history lengths.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::denoiser::{grid_input, DenoiserParams};
use super::graph::Graph;
use super::tensor::Tensor;
use crate::bits::BitVector;
use crate::diffusion::{forward_sample, NoiseSchedule};
use crate::error::{Error, Result};
use crate::noise::{Sample, SyndromeHistory};
use crate::par;
use crate::rng::{derive_seed, stream_rng};

/// One training example after drawing its diffusion step and corrupted state.
#[derive(Clone, Debug)]
pub struct TrainItem<'a> {
    pub history: &'a SyndromeHistory,
    pub x0: &'a BitVector,
    pub t: usize,
    pub x_t: BitVector,
}

/// Draws `t ~ U{1..T}` and `x_t ~ q(x_t | x_0)` for each sample, in order.
pub fn draw_items<'a, R: Rng + ?Sized>(
    batch: &[&'a Sample],
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<Vec<TrainItem<'a>>> {
    batch
        .iter()
        .map(|s| {
            let t = rng.random_range(1..=schedule.steps());
            let x_t = forward_sample(&s.label, t, schedule, rng)?;
            Ok(TrainItem {
                history: &s.history,
                x0: &s.label,
                t,
                x_t,
            })
        })
        .collect()
}

/// Rows per autodiff graph when a batch is split for parallel evaluation.
pub const DEFAULT_SHARD: usize = 64;

/// Mean bitwise cross-entropy over `items` and its parameter gradients.
///
/// Items are split into shards (consecutive runs with equal `r`, at most
/// `shard` long); shard gradients are summed in shard order so the result does
/// not depend on thread scheduling.
pub fn loss_and_grads(params: &DenoiserParams, items: &[TrainItem<'_>], shard: usize) -> Result<(f64, Vec<Tensor>)> {
    if items.is_empty() {
        return Err(Error::InvalidArgument("empty training batch".into()));
    }
    let l = params.config.label_len;
    let scale = 1.0 / (items.len() * l) as f64;
    let mut shards: Vec<&[TrainItem<'_>]> = Vec::new();
    let mut start = 0;
    for i in 1..=items.len() {
        let boundary = i == items.len()
            || items[i].history.rounds() != items[start].history.rounds()
            || i - start == shard.max(1);
        if boundary {
            shards.push(&items[start..i]);
            start = i;
        }
    }
    let results = par::map_slice(&shards, |chunk| shard_loss(params, chunk, scale));
    let mut grads: Vec<Tensor> = params.tensors.iter().map(|t| Tensor::zeros(&t.shape)).collect();
    let mut loss = 0.0;
    for r in results {
        let (l, g) = r?;
        loss += l;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            acc.add_assign(gi);
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    Ok((loss, grads))
}

fn shard_loss(params: &DenoiserParams, items: &[TrainItem<'_>], scale: f64) -> Result<(f64, Vec<Tensor>)> {
    let histories: Vec<&SyndromeHistory> = items.iter().map(|it| it.history).collect();
    let xs: Vec<&BitVector> = items.iter().map(|it| &it.x_t).collect();
    let ts: Vec<usize> = items.iter().map(|it| it.t).collect();
    let targets: Vec<u8> = items.iter().flat_map(|it| it.x0.as_slice().iter().copied()).collect();
    let mut g = Graph::new(&params.tensors);
    let grid = g.input(grid_input(&histories)?);
    let logits = params.build_forward(&mut g, grid, items.len(), histories[0].rounds(), &xs, &ts)?;
    let loss = g.cross_entropy(logits, targets, scale)?;
    let grads = g.backward(loss)?;
    let mut out: Vec<Tensor> = params.tensors.iter().map(|t| Tensor::zeros(&t.shape)).collect();
    grads.accumulate_params(&mut out);
    Ok((g.value(loss).data[0], out))
}

/// Draws diffusion steps for `batch` and returns the loss with its gradients.
pub fn training_loss<R: Rng + ?Sized>(
    params: &DenoiserParams,
    batch: &[&Sample],
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<(f64, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty training batch".into()));
    }
    let items = draw_items(batch, schedule, rng)?;
    loss_and_grads(params, &items, DEFAULT_SHARD)
}

/// Adaptive-moment gradient descent with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: i32,
}

impl Adam {
    pub fn new(params: &[Tensor], learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(&p.shape)).collect();
        Self {
            learning_rate,
            beta1,
            beta2,
            eps,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= self.learning_rate * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Epochs spent in each curriculum stage.
    pub epochs_per_stage: usize,
    /// Optional cap on the total number of optimizer steps.
    pub max_steps: Option<usize>,
    pub shard_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs_per_stage: 1,
            max_steps: None,
            shard_size: DEFAULT_SHARD,
        }
    }
}

/// Training data for one history length.
#[derive(Clone, Copy, Debug)]
pub struct RoundSet<'a> {
    pub rounds: usize,
    pub samples: &'a [Sample],
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// `(step, batch loss)` for every optimizer step.
    pub losses: Vec<(usize, f64)>,
    pub steps: usize,
}

/// Batches for one curriculum stage: every active set is shuffled and cut
/// into batches, which are then interleaved round-robin across sets.
fn stage_batches<R: Rng + ?Sized>(sets: &[RoundSet<'_>], batch: usize, rng: &mut R) -> Vec<(usize, Vec<usize>)> {
    let per_set: Vec<Vec<Vec<usize>>> = sets
        .iter()
        .map(|s| {
            let mut idx: Vec<usize> = (0..s.samples.len()).collect();
            idx.shuffle(rng);
            idx.chunks(batch).map(<[usize]>::to_vec).collect()
        })
        .collect();
    let longest = per_set.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::new();
    for b in 0..longest {
        for (si, batches) in per_set.iter().enumerate() {
            if let Some(chunk) = batches.get(b) {
                out.push((si, chunk.clone()));
            }
        }
    }
    out
}

/// Trains `params` in place. Stage `k` cycles through the `k` shortest history
/// lengths; with a single length this is plain minibatch training.
pub fn train(
    params: &mut DenoiserParams,
    sets: &[RoundSet<'_>],
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainReport> {
    if sets.is_empty() || sets.iter().any(|s| s.samples.is_empty()) {
        return Err(Error::InvalidArgument("training needs non-empty datasets".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    if schedule.steps() != params.config.steps {
        return Err(Error::InvalidArgument(format!(
            "schedule has {} steps but the model expects {}",
            schedule.steps(),
            params.config.steps
        )));
    }
    for s in sets {
        for sample in s.samples {
            if sample.history.distance() != params.config.d
                || sample.label.len() != params.config.label_len
                || sample.history.rounds() != s.rounds
            {
                return Err(Error::InvalidArgument(format!(
                    "dataset for r={} does not match the model (d={}, L={})",
                    s.rounds, params.config.d, params.config.label_len
                )));
            }
        }
    }
    let mut ordered: Vec<RoundSet<'_>> = sets.to_vec();
    ordered.sort_by_key(|s| s.rounds);

    let mut adam = Adam::new(&params.tensors, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
    let shuffle_seed = derive_seed(seed, 1);
    let step_seed = derive_seed(seed, 2);
    let mut losses = Vec::new();
    let mut step = 0usize;
    'stages: for stage in 1..=ordered.len() {
        let active = &ordered[..stage];
        for epoch in 0..cfg.epochs_per_stage {
            let mut rng = stream_rng(shuffle_seed, (stage * 1_000_003 + epoch) as u64);
            for (si, idx) in stage_batches(active, cfg.batch_size, &mut rng) {
                if cfg.max_steps.is_some_and(|m| step >= m) {
                    break 'stages;
                }
                let batch: Vec<&Sample> = idx.iter().map(|&i| &active[si].samples[i]).collect();
                let mut srng = stream_rng(step_seed, step as u64);
                let items = draw_items(&batch, schedule, &mut srng)?;
                let (loss, grads) = match loss_and_grads(params, &items, cfg.shard_size) {
                    Ok(v) => v,
                    Err(Error::NonFinite(_)) => return Err(Error::Diverged { step, loss: f64::NAN }),
                    Err(e) => return Err(e),
                };
                adam.step(&mut params.tensors, &grads);
                params.trained_steps += 1;
                if params.tensors.iter().any(|t| !t.is_finite()) {
                    return Err(Error::Diverged { step, loss });
                }
                losses.push((step, loss));
                step += 1;
            }
        }
    }
    Ok(TrainReport { losses, steps: step })
}

/// Loss curve as `step,loss` CSV.
pub fn loss_csv(losses: &[(usize, f64)]) -> String {
    let mut out = String::from("step,loss\n");
    for (s, l) in losses {
        out.push_str(&format!("{s},{l}\n"));
    }
    out
}
