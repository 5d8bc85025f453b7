//! JSON-lines datasets of labeled shots.
//!
//! The first line is a header carrying the format tag, configuration and seed;
//! each following line is one shot.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::bits::BitVector;
use crate::code::{ObservableMode, SurfaceCode};
use crate::error::{Error, Result};
use crate::noise::{run_memory_experiment, NoiseModel, Sample, SampleMeta, SyndromeHistory};
use crate::par;
use crate::rng::stream_rng;

pub const DATASET_FORMAT: &str = "diffqec-ds-1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format: String,
    pub d: usize,
    pub r: usize,
    pub noise: NoiseModel,
    pub observables: ObservableMode,
    pub seed: u64,
    pub n_samples: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    d: usize,
    r: usize,
    grid: Vec<Vec<Vec<Vec<u8>>>>,
    label: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    true_x: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    true_z: Option<Vec<u8>>,
}

impl Row {
    fn from_sample(s: &Sample) -> Self {
        let d = s.history.distance();
        let side = d + 1;
        let flat = s.history.grid();
        let grid = (0..s.history.rounds())
            .map(|r| {
                (0..2)
                    .map(|ch| {
                        (0..side)
                            .map(|i| {
                                let start = ((r * 2 + ch) * side + i) * side;
                                flat[start..start + side].to_vec()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Row {
            d,
            r: s.history.rounds(),
            grid,
            label: s.label.as_slice().to_vec(),
            true_x: s.true_error.as_ref().map(|(x, _)| x.as_slice().to_vec()),
            true_z: s.true_error.as_ref().map(|(_, z)| z.as_slice().to_vec()),
        }
    }

    fn into_sample(self, code: &SurfaceCode, meta: SampleMeta) -> Result<Sample> {
        if self.d != code.distance() || self.r != meta.r {
            return Err(Error::Format(format!(
                "row has d={}, r={} but header says d={}, r={}",
                self.d, self.r, meta.d, meta.r
            )));
        }
        let flat: Vec<u8> = self.grid.into_iter().flatten().flatten().flatten().collect();
        let history = SyndromeHistory::from_grid(code, self.r, flat)?;
        let true_error = match (self.true_x, self.true_z) {
            (Some(x), Some(z)) => Some((BitVector::from_bits(x), BitVector::from_bits(z))),
            (None, None) => None,
            _ => return Err(Error::Format("true_x and true_z must appear together".into())),
        };
        Ok(Sample {
            history,
            label: BitVector::from_bits(self.label),
            true_error,
            meta,
        })
    }
}

/// Summary returned by [`generate_dataset`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub n_samples: usize,
    /// Count of ones per label bit.
    pub label_ones: Vec<usize>,
    /// Fraction of shots whose label is nonzero.
    pub label_rate: f64,
    pub shots_with_events: usize,
}

/// Simulates shots `range` of the stream identified by `seed`; shot `i` always
/// uses random stream `i`, so any sub-range reproduces the same shots.
pub fn simulate_shots(
    code: &SurfaceCode,
    noise: &NoiseModel,
    rounds: usize,
    mode: ObservableMode,
    seed: u64,
    range: std::ops::Range<u64>,
) -> Result<Vec<Sample>> {
    noise.validate()?;
    let start = range.start;
    let n = (range.end - range.start) as usize;
    par::map_range(n, |i| {
        let mut rng = stream_rng(seed, start + i as u64);
        run_memory_experiment(code, noise, rounds, mode, &mut rng).map(|mut s| {
            s.meta.seed = seed;
            s
        })
    })
    .into_iter()
    .collect()
}

const WRITE_CHUNK: u64 = 8192;

/// Writes `n_samples` shots to `path` and returns summary statistics.
pub fn generate_dataset(
    code: &SurfaceCode,
    noise: &NoiseModel,
    rounds: usize,
    n_samples: usize,
    seed: u64,
    mode: ObservableMode,
    path: &Path,
) -> Result<DatasetSummary> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be at least 1".into()));
    }
    noise.validate()?;
    let header = DatasetHeader {
        format: DATASET_FORMAT.to_string(),
        d: code.distance(),
        r: rounds,
        noise: *noise,
        observables: mode,
        seed,
        n_samples,
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    let mut summary = DatasetSummary {
        n_samples,
        label_ones: vec![0; mode.label_len()],
        label_rate: 0.0,
        shots_with_events: 0,
    };
    let mut nonzero = 0usize;
    let mut next = 0u64;
    while next < n_samples as u64 {
        let end = (next + WRITE_CHUNK).min(n_samples as u64);
        for s in simulate_shots(code, noise, rounds, mode, seed, next..end)? {
            for (i, b) in s.label.iter().enumerate() {
                summary.label_ones[i] += b as usize;
            }
            nonzero += usize::from(!s.label.is_zero());
            summary.shots_with_events += usize::from(s.history.has_events());
            serde_json::to_writer(&mut out, &Row::from_sample(&s))?;
            out.write_all(b"\n")?;
        }
        next = end;
    }
    out.flush()?;
    summary.label_rate = nonzero as f64 / n_samples as f64;
    Ok(summary)
}

/// A dataset loaded into memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn code(&self) -> Result<SurfaceCode> {
        SurfaceCode::rotated(self.header.d)
    }

    pub fn label_len(&self) -> usize {
        self.header.observables.label_len()
    }
}

/// Reads a dataset, rejecting unknown format versions and malformed rows.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{}: empty dataset file", path.display())))??;
    let tag: serde_json::Value = serde_json::from_str(&first)
        .map_err(|e| Error::Format(format!("{}: unreadable header: {e}", path.display())))?;
    if tag.get("format").and_then(|v| v.as_str()) != Some(DATASET_FORMAT) {
        return Err(Error::Format(format!(
            "{}: expected format {DATASET_FORMAT}, found {}",
            path.display(),
            tag.get("format").unwrap_or(&serde_json::Value::Null)
        )));
    }
    let header: DatasetHeader = serde_json::from_value(tag)
        .map_err(|e| Error::Format(format!("{}: bad header: {e}", path.display())))?;
    let code = SurfaceCode::rotated(header.d)?;
    let meta = SampleMeta {
        d: header.d,
        r: header.r,
        noise: header.noise,
        seed: header.seed,
    };
    let mut samples = Vec::with_capacity(header.n_samples);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}: line {}: {e}", path.display(), i + 2)))?;
        let sample = row.into_sample(&code, meta)?;
        if sample.label.len() != header.observables.label_len() {
            return Err(Error::Format(format!("{}: line {}: wrong label length", path.display(), i + 2)));
        }
        samples.push(sample);
    }
    if samples.len() != header.n_samples {
        return Err(Error::Format(format!(
            "{}: header promises {} shots, found {}",
            path.display(),
            header.n_samples,
            samples.len()
        )));
    }
    Ok(Dataset { header, samples })
}
