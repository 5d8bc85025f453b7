//! Reverse-chain decoding with the trained denoiser.

use rand::Rng;
use std::collections::BTreeMap;

use super::denoiser::{DenoiserOutput, DenoiserParams};
use crate::bits::BitVector;
use crate::diffusion::{finalize, reverse_step, sample_prior, NoiseSchedule};
use crate::error::{Error, Result};
use crate::noise::SyndromeHistory;
use crate::par;
use crate::rng::{stream_rng, Rng as StreamRng};

pub const DEFAULT_CHAINS: usize = 4;

/// Decoded label with a per-bit confidence in the chosen class.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub label: BitVector,
    pub confidence: Vec<f64>,
}

impl Decoded {
    /// Least confident bit; used to rank shots for post-selection.
    pub fn min_confidence(&self) -> f64 {
        self.confidence.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Decodes one history with `chains` independent reverse chains.
pub fn decode<R: Rng>(
    params: &DenoiserParams,
    schedule: &NoiseSchedule,
    history: &SyndromeHistory,
    chains: usize,
    rng: &mut R,
) -> Result<Decoded> {
    let mut rngs = [rng];
    Ok(decode_lockstep(params, schedule, &[history], &mut rngs, chains)?.remove(0))
}

/// Shots per lock-step group when decoding many histories.
const GROUP: usize = 256;

/// Decodes many shots; shot `i` draws from random stream `(seed, i)`, so the
/// result is independent of grouping and thread count.
pub fn decode_shots(
    params: &DenoiserParams,
    schedule: &NoiseSchedule,
    histories: &[&SyndromeHistory],
    chains: usize,
    seed: u64,
) -> Result<Vec<Decoded>> {
    decode_shots_from(params, schedule, histories, chains, seed, 0)
}

/// As [`decode_shots`], with shot `i` drawing from stream `first_stream + i`;
/// lets a long shot list be decoded in pieces with identical results.
pub fn decode_shots_from(
    params: &DenoiserParams,
    schedule: &NoiseSchedule,
    histories: &[&SyndromeHistory],
    chains: usize,
    seed: u64,
    first_stream: u64,
) -> Result<Vec<Decoded>> {
    // group by round count, preserving shot indices
    let mut by_r: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, h) in histories.iter().enumerate() {
        by_r.entry(h.rounds()).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = by_r
        .into_values()
        .flat_map(|ids| ids.chunks(GROUP).map(<[usize]>::to_vec).collect::<Vec<_>>())
        .collect();
    let decoded = par::map_slice(&groups, |ids| {
        let hs: Vec<&SyndromeHistory> = ids.iter().map(|&i| histories[i]).collect();
        let mut rngs: Vec<StreamRng> = ids.iter().map(|&i| stream_rng(seed, first_stream + i as u64)).collect();
        let mut refs: Vec<&mut StreamRng> = rngs.iter_mut().collect();
        decode_lockstep(params, schedule, &hs, &mut refs, chains)
    });
    let mut out: Vec<Option<Decoded>> = vec![None; histories.len()];
    for (ids, res) in groups.iter().zip(decoded) {
        for (&i, d) in ids.iter().zip(res?) {
            out[i] = Some(d);
        }
    }
    Ok(out.into_iter().map(|d| d.expect("every shot decoded")).collect())
}

/// Runs the chains of several shots (sharing `r`) step by step. Within a shot
/// and step, chains that sit in the same state share one denoiser evaluation.
fn decode_lockstep<R: Rng>(
    params: &DenoiserParams,
    schedule: &NoiseSchedule,
    histories: &[&SyndromeHistory],
    rngs: &mut [&mut R],
    chains: usize,
) -> Result<Vec<Decoded>> {
    params.check_fitted()?;
    if chains == 0 {
        return Err(Error::InvalidArgument("need at least one chain".into()));
    }
    if schedule.steps() != params.config.steps {
        return Err(Error::InvalidArgument("schedule length does not match the model".into()));
    }
    let l = params.config.label_len;
    let cond = params.condition(histories)?;
    let mut states: Vec<Vec<BitVector>> = rngs
        .iter_mut()
        .map(|rng| (0..chains).map(|_| sample_prior(l, &mut **rng)).collect())
        .collect();
    let mut finals: Vec<Vec<(BitVector, DenoiserOutput)>> = vec![Vec::with_capacity(chains); histories.len()];

    for t in (1..=schedule.steps()).rev() {
        let mut rows = Vec::new();
        let mut xs: Vec<&BitVector> = Vec::new();
        let mut slot: Vec<Vec<usize>> = Vec::with_capacity(histories.len());
        for (shot, chain_states) in states.iter().enumerate() {
            let mut seen: Vec<(&BitVector, usize)> = Vec::new();
            let mut s = Vec::with_capacity(chains);
            for x in chain_states {
                let row = match seen.iter().find(|(y, _)| *y == x) {
                    Some(&(_, r)) => r,
                    None => {
                        rows.push(shot);
                        xs.push(x);
                        seen.push((x, xs.len() - 1));
                        xs.len() - 1
                    }
                };
                s.push(row);
            }
            slot.push(s);
        }
        let logits = params.denoise_rows(&cond, &rows, &xs, t)?;
        let outputs: Vec<DenoiserOutput> = (0..rows.len()).map(|i| DenoiserOutput::from_logits(logits.row(i))).collect();
        for (shot, rng) in rngs.iter_mut().enumerate() {
            for c in 0..chains {
                let out = &outputs[slot[shot][c]];
                if t >= 2 {
                    states[shot][c] = reverse_step(&states[shot][c], t, &out.p_one(), schedule, &mut **rng)?;
                } else {
                    finals[shot].push((finalize(&out.logits)?, out.clone()));
                }
            }
        }
    }

    Ok(finals
        .into_iter()
        .map(|chain_results| {
            let mut label = BitVector::zeros(l);
            let mut confidence = vec![0.0; l];
            for bit in 0..l {
                let ones = chain_results.iter().filter(|(x, _)| x.get(bit)).count();
                let chosen = 2 * ones > chains;
                label.set(bit, chosen);
                confidence[bit] =
                    chain_results.iter().map(|(_, o)| o.p0[bit][chosen as usize]).sum::<f64>() / chains as f64;
            }
            Decoded { label, confidence }
        })
        .collect())
}
