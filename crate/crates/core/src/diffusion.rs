//! Discrete binary diffusion: cosine schedule, symmetric flip kernels,
//! forward corruption and the bitwise reverse posterior.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::bits::BitVector;
use crate::error::{Error, Result};

pub const SCHEDULE_FORMAT: &str = "diffqec-sched-1";
pub const DEFAULT_OFFSET: f64 = 0.008;
pub const DEFAULT_STEPS: usize = 32;
pub const BETA_MIN: f64 = 1e-4;
pub const BETA_MAX: f64 = 0.9999;

/// Diffusion horizon with per-step betas and cumulative retention `ᾱ_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    steps: usize,
    offset: f64,
    /// `betas[t-1]` is β_t.
    betas: Vec<f64>,
    /// `bar_alphas[t]` is ᾱ_t, with ᾱ_0 = 1.
    bar_alphas: Vec<f64>,
}

fn cosine_level(t: f64, steps: f64, offset: f64) -> f64 {
    let angle = (t / steps + offset) / (1.0 + offset) * std::f64::consts::FRAC_PI_2;
    angle.cos().powi(2)
}

impl NoiseSchedule {
    /// Cosine schedule: ᾱ_t = f(t)/f(0), f(t) = cos²(((t/T + s)/(1 + s))·π/2).
    /// Betas are clipped to [1e-4, 0.9999] and ᾱ is rebuilt from the clipped betas.
    pub fn cosine(steps: usize, offset: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("diffusion horizon must be at least 1".into()));
        }
        let f0 = cosine_level(0.0, steps as f64, offset);
        let raw: Vec<f64> = (0..=steps)
            .map(|t| cosine_level(t as f64, steps as f64, offset) / f0)
            .collect();
        let betas: Vec<f64> = (1..=steps)
            .map(|t| (1.0 - raw[t] / raw[t - 1]).clamp(BETA_MIN, BETA_MAX))
            .collect();
        Self::from_betas(betas, offset)
    }

    /// Builds a schedule from explicit betas; ᾱ is their running product.
    pub fn from_betas(betas: Vec<f64>, offset: f64) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidArgument("diffusion horizon must be at least 1".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(Error::OutOfRange(format!("beta {b} outside [0, 1]")));
        }
        let mut bar_alphas = Vec::with_capacity(betas.len() + 1);
        bar_alphas.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            bar_alphas.push(acc);
        }
        Ok(Self {
            steps: betas.len(),
            offset,
            betas,
            bar_alphas,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn bar_alpha(&self, t: usize) -> f64 {
        self.bar_alphas[t]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn bar_alphas(&self) -> &[f64] {
        &self.bar_alphas
    }

    fn check_step(&self, t: usize, min: usize) -> Result<()> {
        if t < min || t > self.steps {
            Err(Error::OutOfRange(format!("step {t} outside [{min}, {}]", self.steps)))
        } else {
            Ok(())
        }
    }

    /// One-step kernel Q_t.
    pub fn kernel_at(&self, t: usize) -> Result<BinaryKernel> {
        self.check_step(t, 1)?;
        Ok(BinaryKernel::flip(self.beta(t) / 2.0))
    }

    /// Product Q_1 · Q_2 ⋯ Q_t, identity at t = 0.
    pub fn cumulative_kernel(&self, t: usize) -> Result<BinaryKernel> {
        self.check_step(t, 0)?;
        Ok((1..=t).fold(BinaryKernel::identity(), |acc, u| acc.compose(&BinaryKernel::flip(self.beta(u) / 2.0))))
    }

    /// Closed form of the cumulative kernel, flip probability (1 − ᾱ_t)/2.
    pub fn cumulative_closed_form(&self, t: usize) -> Result<BinaryKernel> {
        self.check_step(t, 0)?;
        Ok(BinaryKernel::flip((1.0 - self.bar_alpha(t)) / 2.0))
    }

    /// Audit table with one `(t, beta_t, bar_alpha_t)` row per step.
    pub fn dump(&self) -> String {
        let mut out = format!("# {SCHEDULE_FORMAT}\n# steps={} offset={}\nt\tbeta\tbar_alpha\n", self.steps, self.offset);
        let _ = writeln!(out, "0\t\t{:e}", self.bar_alphas[0]);
        for t in 1..=self.steps {
            let _ = writeln!(out, "{t}\t{:e}\t{:e}", self.beta(t), self.bar_alpha(t));
        }
        out
    }
}

/// A 2×2 row-stochastic transition matrix; entry `[a][b]` is P(next = b | current = a).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinaryKernel(pub [[f64; 2]; 2]);

impl BinaryKernel {
    pub fn identity() -> Self {
        Self([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn flip(p: f64) -> Self {
        Self([[1.0 - p, p], [p, 1.0 - p]])
    }

    pub fn compose(&self, other: &Self) -> Self {
        let a = &self.0;
        let b = &other.0;
        let mut m = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self(m)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                m = m.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        m
    }

    pub fn get(&self, from: bool, to: bool) -> f64 {
        self.0[from as usize][to as usize]
    }
}

/// Corrupts `x0` to step `t`: every bit flips independently with probability (1 − ᾱ_t)/2.
pub fn forward_sample<R: Rng + ?Sized>(
    x0: &BitVector,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<BitVector> {
    schedule.check_step(t, 1)?;
    let flip = (1.0 - schedule.bar_alpha(t)) / 2.0;
    Ok(x0.iter().map(|b| b ^ (rng.random::<f64>() < flip)).collect())
}

/// Bitwise posterior q(x_{t−1} | x_t, x_0) from the step beta β_t and ᾱ_{t−1};
/// returns `[P(x_{t−1} = 0), P(x_{t−1} = 1)]`.
pub fn posterior_from(beta_t: f64, bar_alpha_prev: f64, x_t: bool, x0: bool) -> [f64; 2] {
    let step = BinaryKernel::flip(beta_t / 2.0);
    let cumulative = BinaryKernel::flip((1.0 - bar_alpha_prev) / 2.0);
    let w0 = step.get(false, x_t) * cumulative.get(x0, false);
    let w1 = step.get(true, x_t) * cumulative.get(x0, true);
    let z = w0 + w1;
    [w0 / z, w1 / z]
}

/// q(x_{t−1} | x_t, x_0) for 2 ≤ t ≤ T.
pub fn posterior_bit(x_t: bool, x0: bool, t: usize, schedule: &NoiseSchedule) -> Result<[f64; 2]> {
    schedule.check_step(t, 2)?;
    Ok(posterior_from(schedule.beta(t), schedule.bar_alpha(t - 1), x_t, x0))
}

/// Per-bit probability that x_{t−1} = 1 after marginalizing x_0 under `p0_one[i]` = P(x_0ᵢ = 1).
pub fn reverse_probabilities(x_t: &BitVector, t: usize, p0_one: &[f64], schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    crate::error::check_len(x_t.len(), p0_one.len())?;
    schedule.check_step(t, 2)?;
    if let Some(p) = p0_one.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::OutOfRange(format!("probability {p} outside [0, 1]")));
    }
    let (beta, prev) = (schedule.beta(t), schedule.bar_alpha(t - 1));
    Ok(x_t
        .iter()
        .zip(p0_one)
        .map(|(xt, &p1)| {
            let from0 = posterior_from(beta, prev, xt, false)[1];
            let from1 = posterior_from(beta, prev, xt, true)[1];
            (1.0 - p1) * from0 + p1 * from1
        })
        .collect())
}

/// Samples x_{t−1} bit by bit from the reverse mixture.
pub fn reverse_step<R: Rng + ?Sized>(
    x_t: &BitVector,
    t: usize,
    p0_one: &[f64],
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<BitVector> {
    let probs = reverse_probabilities(x_t, t, p0_one, schedule)?;
    Ok(probs.iter().map(|&p| rng.random::<f64>() < p).collect())
}

/// x_T ~ Bernoulli(1/2)^L.
pub fn sample_prior<R: Rng + ?Sized>(len: usize, rng: &mut R) -> BitVector {
    (0..len).map(|_| rng.random::<bool>()).collect()
}

/// Bitwise argmax over `(logit_0, logit_1)` pairs; ties go to 0.
pub fn finalize(logits: &[[f64; 2]]) -> Result<BitVector> {
    if logits.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("finalize logits".into()));
    }
    Ok(logits.iter().map(|[a, b]| b > a).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn schedule_invariants() {
        for steps in [1, 2, 8, 32, 100] {
            let s = NoiseSchedule::cosine(steps, DEFAULT_OFFSET).unwrap();
            assert_eq!(s.bar_alpha(0), 1.0);
            for t in 1..=steps {
                assert!(s.bar_alpha(t) < s.bar_alpha(t - 1));
                assert!(s.bar_alpha(t) > 0.0 && s.bar_alpha(t) <= 1.0);
                assert!((BETA_MIN..=BETA_MAX).contains(&s.beta(t)));
            }
        }
        assert!(NoiseSchedule::cosine(0, DEFAULT_OFFSET).is_err());
    }

    #[test]
    fn last_beta_hits_the_cap() {
        let s = NoiseSchedule::cosine(32, DEFAULT_OFFSET).unwrap();
        assert_eq!(s.beta(32), BETA_MAX);
    }

    #[test]
    fn kernel_examples() {
        let s = NoiseSchedule::from_betas(vec![0.3, 1.0, 0.0], 0.0).unwrap();
        assert!(s.kernel_at(1).unwrap().max_abs_diff(&BinaryKernel([[0.85, 0.15], [0.15, 0.85]])) < 1e-15);
        assert_eq!(s.kernel_at(2).unwrap(), BinaryKernel([[0.5, 0.5], [0.5, 0.5]]));
        assert_eq!(s.kernel_at(3).unwrap(), BinaryKernel::identity());
        assert!(s.kernel_at(0).is_err());
        assert!(s.kernel_at(4).is_err());
        assert_eq!(s.cumulative_kernel(0).unwrap(), BinaryKernel::identity());
        assert!(s.cumulative_kernel(4).is_err());
    }

    #[test]
    fn cumulative_kernel_matches_closed_form_and_chapman_kolmogorov() {
        let s = NoiseSchedule::cosine(32, DEFAULT_OFFSET).unwrap();
        for t in 0..=32 {
            let prod = s.cumulative_kernel(t).unwrap();
            assert!(prod.max_abs_diff(&s.cumulative_closed_form(t).unwrap()) <= 1e-12);
            if t > 0 {
                let ck = s.cumulative_kernel(t - 1).unwrap().compose(&s.kernel_at(t).unwrap());
                assert!(prod.max_abs_diff(&ck) <= 1e-12);
            }
        }
        let end = s.cumulative_kernel(32).unwrap();
        assert!((end.0[0][1] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn posterior_bayes_example() {
        // two-state Bayes: (0.9·0.2)/(0.9·0.2 + 0.1·0.8)
        let p = posterior_from(0.2, 0.6, false, true);
        assert!((p[0] - 0.18 / 0.26).abs() < 1e-15);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_normalizes_and_favours_agreement() {
        let s = NoiseSchedule::cosine(32, DEFAULT_OFFSET).unwrap();
        for t in 2..=32 {
            for xt in [false, true] {
                for x0 in [false, true] {
                    let p = posterior_bit(xt, x0, t, &s).unwrap();
                    assert!((p[0] + p[1] - 1.0).abs() <= 1e-12);
                    if xt == x0 {
                        assert!(p[x0 as usize] >= 0.5);
                    }
                }
            }
        }
        assert!(posterior_bit(false, false, 1, &s).is_err());
        assert!(posterior_bit(false, false, 33, &s).is_err());
    }

    #[test]
    fn posterior_noiseless_limit_is_a_point_mass() {
        let p = posterior_from(1e-15, 1.0 - 1e-15, true, true);
        assert!(p[1] > 1.0 - 1e-12);
    }

    #[test]
    fn reverse_step_limits() {
        let mut rng = stream_rng(9, 0);
        let quiet = NoiseSchedule::from_betas(vec![1e-12; 4], 0.0).unwrap();
        let x = BitVector::from_bits([1, 0, 1]);
        let p0: Vec<f64> = x.to_f64();
        for _ in 0..100 {
            assert_eq!(reverse_step(&x, 3, &p0, &quiet, &mut rng).unwrap(), x);
        }
        let loud = NoiseSchedule::from_betas(vec![1.0 - 1e-12, 1.0], 0.0).unwrap();
        let probs = reverse_probabilities(&BitVector::from_bits([0]), 2, &[0.5], &loud).unwrap();
        assert!((probs[0] - 0.5).abs() < 1e-9);
        assert!(reverse_step(&x, 3, &[0.5, 1.5, 0.0], &quiet, &mut rng).is_err());
    }

    #[test]
    fn forward_sample_edges() {
        let mut rng = stream_rng(10, 0);
        let s = NoiseSchedule::from_betas(vec![0.0, 0.5], 0.0).unwrap();
        let x = BitVector::from_bits([1, 1, 0, 1]);
        for _ in 0..50 {
            assert_eq!(forward_sample(&x, 1, &s, &mut rng).unwrap(), x);
        }
        assert!(forward_sample(&x, 0, &s, &mut rng).is_err());
        assert!(forward_sample(&x, 3, &s, &mut rng).is_err());
    }

    #[test]
    fn prior_and_finalize() {
        let mut rng = stream_rng(11, 0);
        assert!(sample_prior(0, &mut rng).is_empty());
        let out = finalize(&[[2.0, -1.0], [0.0, 0.0], [-0.1, 0.3]]).unwrap();
        assert_eq!(out.as_slice(), &[0, 0, 1]);
        assert!(finalize(&[[f64::NAN, 0.0]]).is_err());
    }

    #[test]
    fn dump_has_one_row_per_step() {
        let s = NoiseSchedule::cosine(8, DEFAULT_OFFSET).unwrap();
        let text = s.dump();
        assert!(text.starts_with("# diffqec-sched-1"));
        assert_eq!(text.lines().count(), 3 + 9);
    }
}
