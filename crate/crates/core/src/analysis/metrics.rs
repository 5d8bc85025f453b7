//! Logical error rates, Wilson intervals and confidence-based post-selection.

use serde::Serialize;

use crate::bits::BitVector;
use crate::error::{check_len, Error, Result};

/// Normal quantile for two-sided 95% intervals.
pub const Z95: f64 = 1.959963984540054;

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // the interval always contains p; clamp away rounding at k = 0 and k = n
    ((center - half).clamp(0.0, p), (center + half).clamp(p, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub decoder: String,
    pub n_shots: usize,
    pub n_errors: usize,
    pub ler: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `1 − 2·LER`.
    pub fidelity: f64,
    pub mean_latency_us: Option<f64>,
}

impl EvalReport {
    pub fn from_counts(decoder: &str, n_errors: usize, n_shots: usize) -> Self {
        let ler = n_errors as f64 / n_shots as f64;
        let (ci_low, ci_high) = wilson_interval(n_errors, n_shots, Z95);
        Self {
            decoder: decoder.to_string(),
            n_shots,
            n_errors,
            ler,
            ci_low,
            ci_high,
            fidelity: 1.0 - 2.0 * ler,
            mean_latency_us: None,
        }
    }

    pub fn with_latency(mut self, latencies_us: &[f64]) -> Self {
        if !latencies_us.is_empty() {
            self.mean_latency_us = Some(latencies_us.iter().sum::<f64>() / latencies_us.len() as f64);
        }
        self
    }

    /// Whether two reports' 95% intervals overlap.
    pub fn overlaps(&self, other: &Self) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

fn count_errors(predictions: &[BitVector], labels: &[BitVector]) -> Result<usize> {
    check_len(labels.len(), predictions.len())?;
    let mut n = 0;
    for (p, l) in predictions.iter().zip(labels) {
        check_len(l.len(), p.len())?;
        n += (p != l) as usize;
    }
    Ok(n)
}

/// Fraction of shots with any mispredicted bit.
pub fn logical_error_rate(decoder: &str, predictions: &[BitVector], labels: &[BitVector]) -> Result<EvalReport> {
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("no shots to evaluate".into()));
    }
    let errors = count_errors(predictions, labels)?;
    Ok(EvalReport::from_counts(decoder, errors, predictions.len()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PostselectReport {
    pub rho: f64,
    pub retained_fraction: f64,
    pub report: EvalReport,
}

/// Discards the `floor(ρ·n)` least confident shots (stable on ties) and
/// evaluates the rest.
pub fn postselect(
    decoder: &str,
    predictions: &[BitVector],
    labels: &[BitVector],
    confidences: &[f64],
    rho: f64,
) -> Result<PostselectReport> {
    if !(0.0..=0.99).contains(&rho) {
        return Err(Error::OutOfRange(format!("discard ratio {rho} outside [0, 0.99]")));
    }
    check_len(predictions.len(), confidences.len())?;
    if confidences.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("confidences".into()));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("no shots to evaluate".into()));
    }
    let n = predictions.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| confidences[a].total_cmp(&confidences[b]));
    let drop = (rho * n as f64).floor() as usize;
    let kept = &order[drop..];
    if kept.is_empty() {
        return Err(Error::InvalidArgument("post-selection discarded every shot".into()));
    }
    let p: Vec<BitVector> = kept.iter().map(|&i| predictions[i].clone()).collect();
    let l: Vec<BitVector> = kept.iter().map(|&i| labels[i].clone()).collect();
    let report = logical_error_rate(decoder, &p, &l)?;
    Ok(PostselectReport {
        rho,
        retained_fraction: kept.len() as f64 / n as f64,
        report,
    })
}

/// CSV rows `decoder,rho,retained,n_shots,n_errors,ler,ci_low,ci_high,fidelity`.
pub fn postselect_csv(rows: &[PostselectReport]) -> String {
    let mut out = String::from("decoder,rho,retained,n_shots,n_errors,ler,ci_low,ci_high,fidelity\n");
    for r in rows {
        let e = &r.report;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            e.decoder, r.rho, r.retained_fraction, e.n_shots, e.n_errors, e.ler, e.ci_low, e.ci_high, e.fidelity
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_bounds_are_exact_at_the_extremes() {
        for n in 1..200 {
            assert_eq!(wilson_interval(0, n, Z95).0, 0.0);
            assert_eq!(wilson_interval(n, n, Z95).1, 1.0);
        }
    }

    fn bits(v: &[u8]) -> Vec<BitVector> {
        v.iter().map(|&b| BitVector::from_bits([b])).collect()
    }

    #[test]
    fn wilson_reference_value() {
        let (lo, hi) = wilson_interval(50, 1000, Z95);
        assert!((lo - 0.038130).abs() < 1e-6, "{lo}");
        assert!((hi - 0.065314).abs() < 1e-6, "{hi}");
    }

    #[test]
    fn all_right_and_all_wrong() {
        let l = bits(&[0, 1, 1, 0]);
        let r = logical_error_rate("x", &l, &l).unwrap();
        assert_eq!(r.ler, 0.0);
        assert!(r.ci_low <= r.ler && r.ler <= r.ci_high);
        let w = bits(&[1, 0, 0, 1]);
        assert_eq!(logical_error_rate("x", &w, &l).unwrap().ler, 1.0);
        assert!(logical_error_rate("x", &[], &[]).is_err());
    }

    #[test]
    fn any_bit_mismatch_is_one_error() {
        let l = vec![BitVector::from_bits([0, 0])];
        let p = vec![BitVector::from_bits([1, 1])];
        assert_eq!(logical_error_rate("x", &p, &l).unwrap().n_errors, 1);
    }

    #[test]
    fn postselect_zero_is_plain_rate() {
        let l = bits(&[0, 1, 1, 0, 1]);
        let p = bits(&[0, 0, 1, 1, 1]);
        let c = [0.9, 0.5, 0.8, 0.6, 0.99];
        let a = postselect("x", &p, &l, &c, 0.0).unwrap();
        assert_eq!(a.report, logical_error_rate("x", &p, &l).unwrap());
        let b = postselect("x", &p, &l, &c, 0.4).unwrap();
        assert_eq!(b.report.n_shots, 3);
        assert_eq!(b.report.ler, 0.0);
        assert!(postselect("x", &p, &l, &c, 1.0).is_err());
        assert!(postselect("x", &p, &l, &[f64::NAN; 5], 0.0).is_err());
    }
}
