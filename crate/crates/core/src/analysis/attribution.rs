//! Integrated-gradients attribution over syndrome histories and its mapping
//! onto data qubits.

use serde::Serialize;

use crate::bits::BitVector;
use crate::code::SurfaceCode;
use crate::error::{Error, Result};
use crate::nn::denoiser::DenoiserParams;
use crate::noise::{detector_cell, SyndromeHistory};

pub const MIN_IG_STEPS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Attribution {
    /// One value per detector, round-major, X checks before Z checks.
    pub detectors: Vec<f64>,
    /// Class per label bit whose logit margin is explained.
    pub target: BitVector,
    pub f_input: f64,
    pub f_baseline: f64,
    /// `|Σ attributions − (f(s) − f(b))|`.
    pub residual: f64,
    /// Whether the residual is within `0.01·|f(s) − f(b)| + 1e−4`.
    pub complete: bool,
}

/// Margin weights: `+1` on the target class logit and `−1` on the other, per bit.
fn margin_weights(target: &BitVector) -> Vec<f64> {
    target
        .iter()
        .flat_map(|c| if c { [-1.0, 1.0] } else { [1.0, -1.0] })
        .collect()
}

/// Integrated gradients of the predicted-class logit margin at `t = 1`,
/// `x_t = 0`, from the all-zero grid to `history`, with `m_steps` right
/// Riemann points evaluated as one batch.
pub fn integrated_gradients(
    params: &DenoiserParams,
    code: &SurfaceCode,
    history: &SyndromeHistory,
    m_steps: usize,
) -> Result<Attribution> {
    params.check_fitted()?;
    if m_steps < MIN_IG_STEPS {
        return Err(Error::InvalidArgument(format!("integrated gradients needs at least {MIN_IG_STEPS} steps")));
    }
    if history.distance() != code.distance() || code.distance() != params.config.d {
        return Err(Error::Shape("history, code and model distances differ".into()));
    }
    let r = history.rounds();
    let l = params.config.label_len;
    let x0 = BitVector::zeros(l);
    let s = history.to_f64();
    let zero = vec![0.0; s.len()];

    let out = params.forward(&x0, 1, history)?;
    let target = BitVector::from_bools(out.logits.iter().map(|[a, b]| b > a));
    let w = margin_weights(&target);

    let mut grids = Vec::with_capacity(m_steps + 1);
    grids.push(zero);
    for k in 1..=m_steps {
        let a = k as f64 / m_steps as f64;
        grids.push(s.iter().map(|v| a * v).collect());
    }
    let (values, grads) = params.margin_with_input_grad(&grids, r, &x0, 1, &w)?;
    let f_baseline = values[0];
    let f_input = values[m_steps];
    let mut ig = vec![0.0; s.len()];
    for g in &grads[1..] {
        for (acc, gi) in ig.iter_mut().zip(g) {
            *acc += gi;
        }
    }
    for (v, si) in ig.iter_mut().zip(&s) {
        *v *= si / m_steps as f64;
    }
    let block = 2 * code.grid_side() * code.grid_side();
    let n_det = code.n_stabilizers();
    let detectors: Vec<f64> = (0..r)
        .flat_map(|k| (0..n_det).map(move |i| (k, i)))
        .map(|(k, i)| ig[k * block + detector_cell(code, i)])
        .collect();
    let delta = f_input - f_baseline;
    let residual = (detectors.iter().sum::<f64>() - delta).abs();
    Ok(Attribution {
        detectors,
        target,
        f_input,
        f_baseline,
        residual,
        complete: residual <= 0.01 * delta.abs() + 1e-4,
    })
}

/// `score_j = Σ_i H[i, j]·|a_i|` over both check types and all rounds,
/// divided by the largest score.
pub fn map_attributions_to_qubits(attributions: &[f64], code: &SurfaceCode) -> Result<Vec<f64>> {
    let n_det = code.n_stabilizers();
    if attributions.is_empty() || attributions.len() % n_det != 0 {
        return Err(Error::Shape(format!(
            "{} attributions is not a whole number of rounds of {n_det} detectors",
            attributions.len()
        )));
    }
    let stabs: Vec<_> = code.x_stabilizers().iter().chain(code.z_stabilizers()).collect();
    let mut scores = vec![0.0; code.n_data()];
    for (i, a) in attributions.iter().enumerate() {
        for &q in &stabs[i % n_det].support {
            scores[q] += a.abs();
        }
    }
    let max = scores.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for s in &mut scores {
            *s /= max;
        }
    }
    Ok(scores)
}

/// Indices of the `k` largest scores, ties broken by lower index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Detector attributions laid out per round as `[channel][row][col]` grids.
pub fn attribution_grid(attributions: &[f64], code: &SurfaceCode) -> Result<Vec<Vec<Vec<Vec<f64>>>>> {
    let n_det = code.n_stabilizers();
    if attributions.len() % n_det != 0 {
        return Err(Error::Shape("attributions do not cover whole rounds".into()));
    }
    let s = code.grid_side();
    Ok(attributions
        .chunks(n_det)
        .map(|round| {
            let mut g = vec![vec![vec![0.0; s]; s]; 2];
            for (i, &a) in round.iter().enumerate() {
                let cell = detector_cell(code, i);
                g[cell / (s * s)][cell / s % s][cell % s] = a;
            }
            g
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_attributions_map_to_zero() {
        let code = SurfaceCode::rotated(3).unwrap();
        assert_eq!(map_attributions_to_qubits(&[0.0; 8], &code).unwrap(), vec![0.0; 9]);
        assert!(map_attributions_to_qubits(&[0.0; 7], &code).is_err());
    }

    #[test]
    fn one_hot_hits_stabilizer_support() {
        let code = SurfaceCode::rotated(3).unwrap();
        for i in 0..8 {
            let mut a = vec![0.0; 16];
            a[8 + i] = -0.3;
            let s = map_attributions_to_qubits(&a, &code).unwrap();
            let st = if i < 4 { &code.x_stabilizers()[i] } else { &code.z_stabilizers()[i - 4] };
            for (q, v) in s.iter().enumerate() {
                assert_eq!(*v > 0.0, st.support.contains(&q));
            }
            assert_eq!(s.iter().copied().fold(0.0, f64::max), 1.0);
        }
    }

    #[test]
    fn top_k_orders_by_score() {
        assert_eq!(top_k(&[0.1, 0.9, 0.5, 0.9], 2), vec![1, 3]);
    }
}
