//! Exact maximum-likelihood decoding for d=3 by enumerating every Pauli error,
//! and the syndrome lookup table derived from it.

use serde::Serialize;

use crate::bits::BitVector;
use crate::code::{ObservableMode, SurfaceCode};
use crate::error::{check_len, Error, Result};
use crate::noise::{NoiseKind, NoiseModel, SyndromeHistory};

/// Joint probabilities `P(syndrome, logical class)` under code-capacity noise.
///
/// Syndromes are indexed `s_x | s_z << n_x`; classes `z_obs | x_obs << 1`.
#[derive(Clone, Debug)]
pub struct MlOracle {
    code: SurfaceCode,
    n_x: usize,
    joint: Vec<[f64; 4]>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MlResult {
    pub label: BitVector,
    /// Posterior over label values, indexed by the label read as a little-endian integer.
    pub posteriors: Vec<f64>,
}

fn masks(code: &SurfaceCode) -> (Vec<u32>, Vec<u32>) {
    let n = code.n_data();
    let n_x = code.n_x();
    // x error on q flips Z checks; z error flips X checks
    let zsyn = (0..n)
        .map(|q| {
            let e = BitVector::from_support(n, &[q]);
            (code.h_z().mul_vec(&e).unwrap().to_mask() as u32) << n_x
        })
        .collect();
    let xsyn = (0..n)
        .map(|q| code.h_x().mul_vec(&BitVector::from_support(n, &[q])).unwrap().to_mask() as u32)
        .collect();
    (zsyn, xsyn)
}

impl MlOracle {
    pub fn new(code: &SurfaceCode, noise: &NoiseModel) -> Result<Self> {
        if code.distance() != 3 {
            return Err(Error::InvalidDistance(code.distance()));
        }
        noise.validate()?;
        if noise.kind != NoiseKind::CodeCapacity || noise.p_meas != 0.0 {
            return Err(Error::InvalidNoise("the ML oracle needs code-capacity noise".into()));
        }
        let n = code.n_data();
        let n_x = code.n_x();
        let (syn_of_x, syn_of_z) = masks(code);
        let lz = code.logical_z().to_mask();
        let lx = code.logical_x().to_mask();
        let side = 1usize << n;
        let fold = |table: &[u32], m: usize| -> u32 {
            (0..n).filter(|q| m >> q & 1 == 1).fold(0, |acc, q| acc ^ table[q])
        };
        let sx_part: Vec<u32> = (0..side).map(|m| fold(&syn_of_x, m)).collect();
        let sz_part: Vec<u32> = (0..side).map(|m| fold(&syn_of_z, m)).collect();
        let p = noise.p_phys;
        let probs: Vec<f64> = (0..=n as i32).map(|w| (1.0 - p).powi(n as i32 - w) * (p / 3.0).powi(w)).collect();
        let mut joint = vec![[0.0; 4]; 1 << code.n_stabilizers()];
        for xm in 0..side {
            let zobs = (xm as u64 & lz).count_ones() & 1;
            for zm in 0..side {
                let xobs = (zm as u64 & lx).count_ones() & 1;
                let w = (xm | zm).count_ones() as usize;
                let s = (sx_part[xm] ^ sz_part[zm]) as usize;
                joint[s][(zobs | xobs << 1) as usize] += probs[w];
            }
        }
        Ok(Self {
            code: code.clone(),
            n_x,
            joint,
        })
    }

    pub fn code(&self) -> &SurfaceCode {
        &self.code
    }

    /// Number of distinct syndromes, `2^(n_x + n_z)`.
    pub fn n_syndromes(&self) -> usize {
        self.joint.len()
    }

    pub fn syndrome_index(&self, s_x: &BitVector, s_z: &BitVector) -> Result<usize> {
        check_len(self.code.n_x(), s_x.len())?;
        check_len(self.code.n_z(), s_z.len())?;
        Ok((s_x.to_mask() | s_z.to_mask() << self.n_x) as usize)
    }

    /// Joint probabilities of the label values for a syndrome index, unnormalized.
    fn class_mass(&self, s: usize, mode: ObservableMode) -> Vec<f64> {
        let j = self.joint[s];
        match mode {
            ObservableMode::Single => vec![j[0] + j[2], j[1] + j[3]],
            ObservableMode::Dual => j.to_vec(),
        }
    }

    pub fn decode_index(&self, s: usize, mode: ObservableMode) -> Result<MlResult> {
        let mass = self.class_mass(s, mode);
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) {
            return Err(Error::OutOfRange(format!("syndrome {s} has zero probability")));
        }
        let posteriors: Vec<f64> = mass.iter().map(|m| m / total).collect();
        let mut best = 0;
        for (c, &v) in posteriors.iter().enumerate() {
            if v > posteriors[best] {
                best = c;
            }
        }
        Ok(MlResult {
            label: BitVector::from_mask(mode.label_len(), best as u64),
            posteriors,
        })
    }

    pub fn decode(&self, s_x: &BitVector, s_z: &BitVector, mode: ObservableMode) -> Result<MlResult> {
        self.decode_index(self.syndrome_index(s_x, s_z)?, mode)
    }

    /// Decodes a single-round history.
    pub fn decode_history(&self, history: &SyndromeHistory, mode: ObservableMode) -> Result<MlResult> {
        let (s_x, s_z) = single_round_syndrome(&self.code, history)?;
        self.decode(&s_x, &s_z, mode)
    }

    /// Channel marginal `P(bit 0 of the label = 1)`.
    pub fn label_marginal(&self) -> f64 {
        self.joint.iter().map(|j| j[1] + j[3]).sum()
    }

    /// Probability that the ML decision is wrong, summed over all syndromes.
    pub fn error_rate(&self, mode: ObservableMode) -> f64 {
        (0..self.joint.len())
            .map(|s| {
                let mass = self.class_mass(s, mode);
                let total: f64 = mass.iter().sum();
                total - mass.iter().copied().fold(0.0, f64::max)
            })
            .sum()
    }
}

fn single_round_syndrome(code: &SurfaceCode, history: &SyndromeHistory) -> Result<(BitVector, BitVector)> {
    if history.rounds() != 1 {
        return Err(Error::InvalidArgument(format!(
            "single-round decoder given {} rounds",
            history.rounds()
        )));
    }
    if history.distance() != code.distance() {
        return Err(Error::Shape("history distance does not match the code".into()));
    }
    Ok(history.events(code).remove(0))
}

/// Convenience wrapper building the oracle for one query.
pub fn ml_decode_bruteforce(
    code: &SurfaceCode,
    noise: &NoiseModel,
    s_x: &BitVector,
    s_z: &BitVector,
    mode: ObservableMode,
) -> Result<MlResult> {
    MlOracle::new(code, noise)?.decode(s_x, s_z, mode)
}

/// Precomputed most-likely label for every syndrome.
#[derive(Clone, Debug)]
pub struct LookupDecoder {
    code: SurfaceCode,
    mode: ObservableMode,
    table: Vec<BitVector>,
}

pub fn build_lookup(code: &SurfaceCode, noise: &NoiseModel, mode: ObservableMode) -> Result<LookupDecoder> {
    let oracle = MlOracle::new(code, noise)?;
    let table = (0..oracle.n_syndromes())
        .map(|s| {
            oracle
                .decode_index(s, mode)
                .map(|r| r.label)
                .unwrap_or_else(|_| BitVector::zeros(mode.label_len()))
        })
        .collect();
    Ok(LookupDecoder {
        code: code.clone(),
        mode,
        table,
    })
}

impl LookupDecoder {
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn mode(&self) -> ObservableMode {
        self.mode
    }

    pub fn decode(&self, s_x: &BitVector, s_z: &BitVector) -> Result<&BitVector> {
        check_len(self.code.n_x(), s_x.len())?;
        check_len(self.code.n_z(), s_z.len())?;
        Ok(&self.table[(s_x.to_mask() | s_z.to_mask() << self.code.n_x()) as usize])
    }

    pub fn decode_history(&self, history: &SyndromeHistory) -> Result<&BitVector> {
        let (s_x, s_z) = single_round_syndrome(&self.code, history)?;
        self.decode(&s_x, &s_z)
    }
}
