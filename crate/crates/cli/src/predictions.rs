//! Per-shot decoder outputs as JSON lines with a tagged header.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const PREDICTIONS_FORMAT: &str = "diffqec-pred-1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionHeader {
    pub format: String,
    pub decoder: String,
    pub dataset: String,
    pub d: usize,
    pub r: usize,
    pub n_shots: usize,
    pub seed: u64,
    pub chains: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRow {
    pub shot: usize,
    pub label: Vec<u8>,
    pub truth: Vec<u8>,
    pub weight: Option<f64>,
    pub exact: bool,
    pub latency_us: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<Vec<f64>>,
}

pub fn write_predictions(path: &Path, header: &PredictionHeader, rows: &[PredictionRow]) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_predictions(path: &Path) -> Result<(PredictionHeader, Vec<PredictionRow>), String> {
    let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| format!("{}: empty predictions file", path.display()))?
        .map_err(|e| e.to_string())?;
    let header: PredictionHeader =
        serde_json::from_str(&first).map_err(|e| format!("{}: bad header: {e}", path.display()))?;
    if header.format != PREDICTIONS_FORMAT {
        return Err(format!(
            "{}: expected format {PREDICTIONS_FORMAT}, found {}",
            path.display(),
            header.format
        ));
    }
    let mut rows = Vec::with_capacity(header.n_shots);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        rows.push(serde_json::from_str(&line).map_err(|e| format!("{}: line {}: {e}", path.display(), i + 2))?);
    }
    if rows.len() != header.n_shots {
        return Err(format!("{}: header promises {} rows, found {}", path.display(), header.n_shots, rows.len()));
    }
    Ok((header, rows))
}
