//! Physical noise sampling and memory experiments.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::code::{ObservableMode, PauliKind, SurfaceCode};
use crate::error::{check_len, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    CodeCapacity,
    Phenomenological,
}

/// Depolarizing data noise with optional measurement flips.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Per-qubit, per-round probability of a non-identity Pauli.
    pub p_phys: f64,
    /// Per-measurement flip probability; zero under code capacity.
    pub p_meas: f64,
}

impl NoiseModel {
    pub fn code_capacity(p_phys: f64) -> Self {
        Self {
            kind: NoiseKind::CodeCapacity,
            p_phys,
            p_meas: 0.0,
        }
    }

    pub fn phenomenological(p_phys: f64, p_meas: f64) -> Self {
        Self {
            kind: NoiseKind::Phenomenological,
            p_phys,
            p_meas,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_phys", self.p_phys), ("p_meas", self.p_meas)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidNoise(format!("{name}={p} is outside [0, 1]")));
            }
        }
        if self.kind == NoiseKind::CodeCapacity && self.p_meas != 0.0 {
            return Err(Error::InvalidNoise("code-capacity noise requires p_meas = 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// Samples one round of depolarizing data errors: X, Y, Z each with probability `p/3`.
pub fn sample_error<R: Rng + ?Sized>(
    code: &SurfaceCode,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<(BitVector, BitVector)> {
    noise.validate()?;
    let n = code.n_data();
    let mut x = BitVector::zeros(n);
    let mut z = BitVector::zeros(n);
    let third = noise.p_phys / 3.0;
    for q in 0..n {
        let u: f64 = rng.random();
        if u < third {
            x.set(q, true);
        } else if u < 2.0 * third {
            x.set(q, true);
            z.set(q, true);
        } else if u < noise.p_phys {
            z.set(q, true);
        }
    }
    Ok((x, z))
}

/// Detection events of `r` rounds laid out on a `r × 2 × (d+1) × (d+1)` grid.
/// Channel 0 holds X-stabilizer events and channel 1 Z-stabilizer events.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyndromeHistory {
    d: usize,
    rounds: usize,
    grid: Vec<u8>,
}

impl SyndromeHistory {
    fn side(&self) -> usize {
        self.d + 1
    }

    pub fn distance(&self) -> usize {
        self.d
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// Flattened grid in `[round][channel][row][col]` order.
    pub fn grid(&self) -> &[u8] {
        &self.grid
    }

    pub fn cell(&self, round: usize, channel: usize, row: usize, col: usize) -> u8 {
        let s = self.side();
        self.grid[((round * 2 + channel) * s + row) * s + col]
    }

    /// Builds a history directly from a flattened grid, checking shape and binary entries.
    pub fn from_grid(code: &SurfaceCode, rounds: usize, grid: Vec<u8>) -> Result<Self> {
        let s = code.grid_side();
        check_len(rounds * 2 * s * s, grid.len())?;
        if rounds == 0 {
            return Err(Error::InvalidArgument("a history needs at least one round".into()));
        }
        if grid.iter().any(|&v| v > 1) {
            return Err(Error::Format("grid entries must be 0 or 1".into()));
        }
        let h = Self {
            d: code.distance(),
            rounds,
            grid,
        };
        // unoccupied cells must stay empty
        let occupied = occupancy_mask(code);
        for r in 0..rounds {
            for (i, &occ) in occupied.iter().enumerate() {
                if !occ && h.grid[r * 2 * s * s + i] != 0 {
                    return Err(Error::Format(format!("round {r}: event at a cell with no stabilizer")));
                }
            }
        }
        Ok(h)
    }

    /// Per-round detection events `(x_events, z_events)`.
    pub fn events(&self, code: &SurfaceCode) -> Vec<(BitVector, BitVector)> {
        (0..self.rounds)
            .map(|r| {
                let pick = |kind: PauliKind, ch: usize| {
                    code.stabilizers(kind)
                        .iter()
                        .map(|st| {
                            let (row, col) = st.grid_cell();
                            self.cell(r, ch, row, col) == 1
                        })
                        .collect::<BitVector>()
                };
                (pick(PauliKind::X, 0), pick(PauliKind::Z, 1))
            })
            .collect()
    }

    /// Raw per-round syndromes recovered by prefix-XOR of the detection events.
    pub fn raw_syndromes(&self, code: &SurfaceCode) -> Vec<(BitVector, BitVector)> {
        let mut out: Vec<(BitVector, BitVector)> = Vec::with_capacity(self.rounds);
        for (ex, ez) in self.events(code) {
            let next = match out.last() {
                None => (ex, ez),
                Some((px, pz)) => (px.xor(&ex).unwrap(), pz.xor(&ez).unwrap()),
            };
            out.push(next);
        }
        out
    }

    /// All detector bits in round-major order, X stabilizers before Z within a round.
    pub fn detector_events(&self, code: &SurfaceCode) -> BitVector {
        let mut bits = Vec::with_capacity(self.rounds * code.n_stabilizers());
        for (ex, ez) in self.events(code) {
            bits.extend_from_slice(ex.as_slice());
            bits.extend_from_slice(ez.as_slice());
        }
        BitVector::from_bits(bits)
    }

    pub fn has_events(&self) -> bool {
        self.grid.iter().any(|&v| v == 1)
    }

    /// Grid as reals, in the same layout as [`Self::grid`].
    pub fn to_f64(&self) -> Vec<f64> {
        self.grid.iter().map(|&v| v as f64).collect()
    }
}

/// For every cell of one round's `2 × (d+1) × (d+1)` block, whether a stabilizer lives there.
pub fn occupancy_mask(code: &SurfaceCode) -> Vec<bool> {
    let s = code.grid_side();
    let mut occ = vec![false; 2 * s * s];
    for (ch, kind) in [(0, PauliKind::X), (1, PauliKind::Z)] {
        for st in code.stabilizers(kind) {
            let (r, c) = st.grid_cell();
            occ[(ch * s + r) * s + c] = true;
        }
    }
    occ
}

/// Index into one round's block for detector `i` (X stabilizers first, then Z).
pub fn detector_cell(code: &SurfaceCode, i: usize) -> usize {
    let s = code.grid_side();
    let (ch, st) = if i < code.n_x() {
        (0, &code.x_stabilizers()[i])
    } else {
        (1, &code.z_stabilizers()[i - code.n_x()])
    };
    let (r, c) = st.grid_cell();
    (ch * s + r) * s + c
}

/// Converts raw per-round syndromes `(s_x, s_z)` into detection events and writes
/// each event at its stabilizer's plaquette cell.
pub fn embed_syndrome_grid(code: &SurfaceCode, raw: &[(BitVector, BitVector)]) -> Result<SyndromeHistory> {
    if raw.is_empty() {
        return Err(Error::InvalidArgument("a history needs at least one round".into()));
    }
    let s = code.grid_side();
    let block = 2 * s * s;
    let mut grid = vec![0u8; raw.len() * block];
    let mut prev = (BitVector::zeros(code.n_x()), BitVector::zeros(code.n_z()));
    for (r, (sx, sz)) in raw.iter().enumerate() {
        check_len(code.n_x(), sx.len())?;
        check_len(code.n_z(), sz.len())?;
        let ex = sx.xor(&prev.0)?;
        let ez = sz.xor(&prev.1)?;
        for (i, bit) in ex.iter().chain(ez.iter()).enumerate() {
            if bit {
                grid[r * block + detector_cell(code, i)] = 1;
            }
        }
        prev = (sx.clone(), sz.clone());
    }
    Ok(SyndromeHistory {
        d: code.distance(),
        rounds: raw.len(),
        grid,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub d: usize,
    pub r: usize,
    pub noise: NoiseModel,
    pub seed: u64,
}

/// One labeled shot.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub history: SyndromeHistory,
    pub label: BitVector,
    /// Accumulated `(x_err, z_err)`; for analysis only.
    pub true_error: Option<(BitVector, BitVector)>,
    pub meta: SampleMeta,
}

/// Runs an `r`-round memory experiment. Every round adds fresh data errors;
/// rounds `1..r` are measured with flip probability `p_meas` and round `r` is a
/// perfect readout from which the label is taken.
pub fn run_memory_experiment<R: Rng + ?Sized>(
    code: &SurfaceCode,
    noise: &NoiseModel,
    rounds: usize,
    mode: ObservableMode,
    rng: &mut R,
) -> Result<Sample> {
    noise.validate()?;
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be at least 1".into()));
    }
    let n = code.n_data();
    let mut acc_x = BitVector::zeros(n);
    let mut acc_z = BitVector::zeros(n);
    let mut raw = Vec::with_capacity(rounds);
    for k in 0..rounds {
        let (ex, ez) = sample_error(code, noise, rng)?;
        acc_x.xor_assign(&ex)?;
        acc_z.xor_assign(&ez)?;
        let (mut sx, mut sz) = code.syndrome_of(&acc_x, &acc_z)?;
        if k + 1 < rounds && noise.p_meas > 0.0 {
            for i in 0..sx.len() {
                if rng.random::<f64>() < noise.p_meas {
                    sx.flip(i);
                }
            }
            for i in 0..sz.len() {
                if rng.random::<f64>() < noise.p_meas {
                    sz.flip(i);
                }
            }
        }
        raw.push((sx, sz));
    }
    let history = embed_syndrome_grid(code, &raw)?;
    let label = code.logical_effect(&acc_x, &acc_z, mode)?;
    Ok(Sample {
        history,
        label,
        true_error: Some((acc_x, acc_z)),
        meta: SampleMeta {
            d: code.distance(),
            r: rounds,
            noise: *noise,
            seed: 0,
        },
    })
}

/// A single-round shot with exactly one Pauli error, drawn uniformly over
/// qubits and over `paulis`.
pub fn single_qubit_error_sample<R: Rng + ?Sized>(
    code: &SurfaceCode,
    paulis: &[Pauli],
    mode: ObservableMode,
    rng: &mut R,
) -> Result<Sample> {
    if paulis.is_empty() {
        return Err(Error::InvalidArgument("need at least one Pauli kind".into()));
    }
    let n = code.n_data();
    let q = rng.random_range(0..n);
    let p = paulis[rng.random_range(0..paulis.len())];
    let mut x = BitVector::zeros(n);
    let mut z = BitVector::zeros(n);
    if matches!(p, Pauli::X | Pauli::Y) {
        x.set(q, true);
    }
    if matches!(p, Pauli::Z | Pauli::Y) {
        z.set(q, true);
    }
    let raw = code.syndrome_of(&x, &z)?;
    Ok(Sample {
        history: embed_syndrome_grid(code, &[raw])?,
        label: code.logical_effect(&x, &z, mode)?,
        true_error: Some((x, z)),
        meta: SampleMeta {
            d: code.distance(),
            r: 1,
            noise: NoiseModel::code_capacity(1.0 / n as f64),
            seed: 0,
        },
    })
}
