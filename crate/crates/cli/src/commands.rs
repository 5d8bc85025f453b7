//! Subcommand implementations. Every command reads a validated [`RunConfig`]
//! and writes its outputs under `config.out`.

use rand::Rng;
use serde::Serialize;
use serde_json::json;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use diffqec::analysis::attribution::{attribution_grid, integrated_gradients, map_attributions_to_qubits, top_k};
use diffqec::analysis::metrics::{logical_error_rate, postselect, postselect_csv, EvalReport, PostselectReport};
use diffqec::baselines::{build_lookup, reweight_with_saliency, MlOracle, MwpmDecoder};
use diffqec::bits::BitVector;
use diffqec::code::{ObservableMode, SurfaceCode};
use diffqec::dataset::{generate_dataset, read_dataset, simulate_shots, Dataset, DatasetSummary};
use diffqec::nn::{decode, decode_shots_from, train, Checkpoint, DenoiserParams, RoundSet};
use diffqec::noise::{single_qubit_error_sample, NoiseModel, Pauli, Sample, SyndromeHistory};
use diffqec::par;
use diffqec::rng::{derive_seed, stream_rng};
use diffqec::NoiseSchedule;

use crate::config::{RunConfig, DECODERS};
use crate::predictions::{read_predictions, write_predictions, PredictionHeader, PredictionRow, PREDICTIONS_FORMAT};

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments; exit code 1.
    Validation(String),
    /// Failure while doing the work; exit code 2.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<diffqec::Error> for CliError {
    fn from(e: diffqec::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn runtime(msg: impl Into<String>) -> CliError {
    CliError::Runtime(msg.into())
}

fn prepare_out(cfg: &RunConfig) -> CliResult<()> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| runtime(format!("cannot create {}: {e}", cfg.out.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn load_dataset(path: &Path) -> CliResult<Dataset> {
    if !path.exists() {
        return Err(runtime(format!("dataset {} does not exist", path.display())));
    }
    Ok(read_dataset(path)?)
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    if !path.exists() {
        return Err(runtime(format!("checkpoint {} does not exist", path.display())));
    }
    Checkpoint::load(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

// ---- gen ----------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct GenOutput {
    pub path: PathBuf,
    pub r: usize,
    pub seed: u64,
    pub summary: DatasetSummary,
}

/// One dataset file per history length; the file for `r` uses seed
/// `derive_seed(seed, r)`.
pub fn cmd_gen(cfg: &RunConfig) -> CliResult<Vec<GenOutput>> {
    let seed = cfg.require_seed().map_err(invalid)?;
    prepare_out(cfg)?;
    let code = SurfaceCode::rotated(cfg.d)?;
    let noise = cfg.noise_model();
    let mut out = Vec::new();
    for &r in &cfg.rounds {
        let path = cfg.dataset_path(r);
        let s = derive_seed(seed, r as u64);
        let summary = generate_dataset(&code, &noise, r, cfg.shots, s, cfg.observables, &path)?;
        out.push(GenOutput { path, r, seed: s, summary });
    }
    write_json(&cfg.out.join("gen_summary.json"), &out)?;
    Ok(out)
}

// ---- train --------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
    pub steps: usize,
    pub final_loss: Option<f64>,
}

pub fn cmd_train(cfg: &RunConfig) -> CliResult<TrainOutput> {
    let seed = cfg.require_seed().map_err(invalid)?;
    let paths: Vec<PathBuf> = if cfg.datasets.is_empty() {
        cfg.rounds.iter().map(|&r| cfg.dataset_path(r)).collect()
    } else {
        cfg.datasets.clone()
    };
    let mut sets = Vec::new();
    for p in &paths {
        let ds = load_dataset(p)?;
        if ds.header.d != cfg.d || ds.header.observables != cfg.observables {
            return Err(invalid(format!(
                "{} has d={} and {:?} observables but the config asks for d={} and {:?}",
                p.display(),
                ds.header.d,
                ds.header.observables,
                cfg.d,
                cfg.observables
            )));
        }
        sets.push(ds);
    }
    prepare_out(cfg)?;
    let schedule = NoiseSchedule::cosine(cfg.model.steps, cfg.model.offset)?;
    let mut params = DenoiserParams::init(cfg.denoiser_config(), &mut stream_rng(derive_seed(seed, 10), 0))?;
    let round_sets: Vec<RoundSet<'_>> = sets
        .iter()
        .map(|ds| RoundSet {
            rounds: ds.header.r,
            samples: &ds.samples,
        })
        .collect();
    let report = train(&mut params, &round_sets, &schedule, &cfg.train, derive_seed(seed, 11))?;
    let ckpt = cfg.out.join("checkpoint.json");
    Checkpoint { params, schedule }.save(&ckpt)?;
    let loss_csv = cfg.out.join("loss.csv");
    std::fs::write(&loss_csv, diffqec::nn::train::loss_csv(&report.losses))?;
    Ok(TrainOutput {
        checkpoint: ckpt,
        loss_csv,
        steps: report.steps,
        final_loss: report.losses.last().map(|l| l.1),
    })
}

// ---- decode -------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct DecodeOutput {
    pub predictions: PathBuf,
    pub report: EvalReport,
}

/// Shots decoded per timed batch by the diffusion decoder.
const DECODE_BATCH: usize = 1024;

fn diffqec_checkpoint(cfg: &RunConfig, code: &SurfaceCode, label_len: usize) -> CliResult<Checkpoint> {
    let ck = load_checkpoint(&cfg.checkpoint_path())?;
    if ck.params.config.d != code.distance() || ck.params.config.label_len != label_len {
        return Err(runtime(format!(
            "checkpoint was trained for d={}, L={} but the dataset has d={}, L={label_len}",
            ck.params.config.d,
            ck.params.config.label_len,
            code.distance()
        )));
    }
    Ok(ck)
}

/// Decodes every shot of `ds` with `decoder`; latency fields are wall-clock.
pub fn decode_dataset(cfg: &RunConfig, decoder: &str, ds: &Dataset) -> CliResult<Vec<PredictionRow>> {
    let code = ds.code()?;
    let mode = ds.header.observables;
    let seed = cfg.seed.unwrap_or(0);
    let row = |shot: usize, label: &BitVector, weight: Option<f64>, exact: bool, latency_us: f64| PredictionRow {
        shot,
        label: label.as_slice().to_vec(),
        truth: ds.samples[shot].label.as_slice().to_vec(),
        weight,
        exact,
        latency_us,
        confidence: None,
    };
    let timed = |f: &mut dyn FnMut() -> CliResult<(BitVector, Option<f64>, bool)>| -> CliResult<(BitVector, Option<f64>, bool, f64)> {
        let t0 = Instant::now();
        let (l, w, e) = f()?;
        Ok((l, w, e, t0.elapsed().as_secs_f64() * 1e6))
    };
    let mut rows = Vec::with_capacity(ds.samples.len());
    match decoder {
        "diffqec" => {
            let ck = diffqec_checkpoint(cfg, &code, ds.label_len())?;
            let hs: Vec<&SyndromeHistory> = ds.samples.iter().map(|s| &s.history).collect();
            for (b, chunk) in hs.chunks(DECODE_BATCH).enumerate() {
                let t0 = Instant::now();
                let first = (b * DECODE_BATCH) as u64;
                let decoded = decode_shots_from(&ck.params, &ck.schedule, chunk, cfg.chains, seed, first)?;
                let per_shot = t0.elapsed().as_secs_f64() * 1e6 / chunk.len() as f64;
                for (k, d) in decoded.into_iter().enumerate() {
                    let shot = b * DECODE_BATCH + k;
                    let mut r = row(shot, &d.label, None, true, per_shot);
                    r.confidence = Some(d.confidence);
                    rows.push(r);
                }
            }
        }
        "mwpm" => {
            let dec = MwpmDecoder::new(&code, &ds.header.noise, ds.header.r, mode)?;
            for (i, s) in ds.samples.iter().enumerate() {
                let (l, w, e, us) = timed(&mut || {
                    let o = dec.decode(&s.history)?;
                    Ok((o.label, Some(o.weight), o.exact))
                })?;
                rows.push(row(i, &l, w, e, us));
            }
        }
        "ml" => {
            let oracle = MlOracle::new(&code, &ds.header.noise)?;
            for (i, s) in ds.samples.iter().enumerate() {
                let (l, w, e, us) = timed(&mut || {
                    let o = oracle.decode_history(&s.history, mode)?;
                    let p = o.posteriors[o.label.to_mask() as usize];
                    Ok((o.label, Some(-p.ln()), true))
                })?;
                rows.push(row(i, &l, w, e, us));
            }
        }
        "lookup" => {
            let table = build_lookup(&code, &ds.header.noise, mode)?;
            for (i, s) in ds.samples.iter().enumerate() {
                let (l, w, e, us) = timed(&mut || Ok((table.decode_history(&s.history)?.clone(), None, true)))?;
                rows.push(row(i, &l, w, e, us));
            }
        }
        other => return Err(invalid(format!("unknown decoder {other:?}; expected one of {DECODERS:?}"))),
    }
    Ok(rows)
}

pub fn cmd_decode(cfg: &RunConfig) -> CliResult<DecodeOutput> {
    let path = cfg.dataset.clone().unwrap_or_else(|| cfg.dataset_path(cfg.rounds[0]));
    let ds = load_dataset(&path)?;
    prepare_out(cfg)?;
    let rows = decode_dataset(cfg, &cfg.decoder, &ds)?;
    let header = PredictionHeader {
        format: PREDICTIONS_FORMAT.into(),
        decoder: cfg.decoder.clone(),
        dataset: path.display().to_string(),
        d: ds.header.d,
        r: ds.header.r,
        n_shots: rows.len(),
        seed: cfg.seed.unwrap_or(0),
        chains: (cfg.decoder == "diffqec").then_some(cfg.chains),
    };
    let out = cfg.predictions_path(&cfg.decoder);
    write_predictions(&out, &header, &rows)?;
    let report = report_from_rows(&cfg.decoder, &rows)?;
    write_json(&cfg.out.join(format!("report_{}.json", cfg.decoder)), &report)?;
    Ok(DecodeOutput { predictions: out, report })
}

fn report_from_rows(decoder: &str, rows: &[PredictionRow]) -> CliResult<EvalReport> {
    let preds: Vec<BitVector> = rows.iter().map(|r| BitVector::from_bits(r.label.clone())).collect();
    let truth: Vec<BitVector> = rows.iter().map(|r| BitVector::from_bits(r.truth.clone())).collect();
    let lat: Vec<f64> = rows.iter().map(|r| r.latency_us).collect();
    Ok(logical_error_rate(decoder, &preds, &truth)?.with_latency(&lat))
}

// ---- postselect ---------------------------------------------------------

/// Post-selection curves for every prediction file. Decoders without a
/// confidence output get uniform random confidences.
pub fn cmd_postselect(cfg: &RunConfig) -> CliResult<Vec<PostselectReport>> {
    let files: Vec<PathBuf> = if cfg.predictions.is_empty() {
        DECODERS.iter().map(|d| cfg.predictions_path(d)).filter(|p| p.exists()).collect()
    } else {
        cfg.predictions.clone()
    };
    if files.is_empty() {
        return Err(runtime(format!("no prediction files found under {}", cfg.out.display())));
    }
    prepare_out(cfg)?;
    let seed = cfg.seed.unwrap_or(0);
    let mut out = Vec::new();
    for (fi, f) in files.iter().enumerate() {
        let (header, rows) = read_predictions(f).map_err(runtime)?;
        let preds: Vec<BitVector> = rows.iter().map(|r| BitVector::from_bits(r.label.clone())).collect();
        let truth: Vec<BitVector> = rows.iter().map(|r| BitVector::from_bits(r.truth.clone())).collect();
        let (name, conf): (String, Vec<f64>) = if rows.iter().all(|r| r.confidence.is_some()) {
            let c = rows
                .iter()
                .map(|r| r.confidence.as_ref().unwrap().iter().copied().fold(f64::INFINITY, f64::min))
                .collect();
            (header.decoder.clone(), c)
        } else {
            let mut rng = stream_rng(derive_seed(seed, 20), fi as u64);
            (format!("{}+random", header.decoder), rows.iter().map(|_| rng.random::<f64>()).collect())
        };
        for &rho in &cfg.rho {
            out.push(postselect(&name, &preds, &truth, &conf, rho)?);
        }
    }
    std::fs::write(cfg.out.join("postselect.csv"), postselect_csv(&out))?;
    write_json(&cfg.out.join("postselect.json"), &out)?;
    Ok(out)
}

// ---- attribute ----------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct AttributeSummary {
    pub n_shots: usize,
    pub top_k: usize,
    pub m_steps: usize,
    /// Fraction of shots with a true error qubit among the top-k scores.
    pub top_k_hit_rate: f64,
    pub complete_shots: usize,
    pub max_residual: f64,
    pub lambda: f64,
    pub mwpm_accuracy: f64,
    pub oracle_reweighted_accuracy: f64,
    pub saliency_reweighted_accuracy: f64,
}

#[derive(Clone, Debug, Serialize)]
struct AttributionRecord {
    shot: usize,
    label: Vec<u8>,
    target: Vec<u8>,
    detectors: Vec<f64>,
    grid: Vec<Vec<Vec<Vec<f64>>>>,
    scores: Vec<f64>,
    top: Vec<usize>,
    true_qubits: Vec<usize>,
    hit: bool,
    f_input: f64,
    f_baseline: f64,
    residual: f64,
    complete: bool,
}

fn true_qubits(s: &Sample) -> Vec<usize> {
    match &s.true_error {
        Some((x, z)) => x.or(z).map(|v| v.support()).unwrap_or_default(),
        None => Vec::new(),
    }
}

/// Shots used by `attribute`: the configured dataset, or freshly drawn
/// single-qubit-error shots.
pub fn attribution_shots(cfg: &RunConfig, code: &SurfaceCode) -> CliResult<Vec<Sample>> {
    if let Some(p) = &cfg.dataset {
        return Ok(load_dataset(p)?.samples);
    }
    let seed = cfg.require_seed().map_err(invalid)?;
    let seed = derive_seed(seed, 30);
    (0..cfg.attribute.shots)
        .map(|i| {
            single_qubit_error_sample(code, &[Pauli::X, Pauli::Y, Pauli::Z], cfg.observables, &mut stream_rng(seed, i as u64))
                .map_err(CliError::from)
        })
        .collect()
}

pub fn cmd_attribute(cfg: &RunConfig) -> CliResult<AttributeSummary> {
    let ck = load_checkpoint(&cfg.checkpoint_path())?;
    let code = SurfaceCode::rotated(ck.params.config.d)?;
    let shots = attribution_shots(cfg, &code)?;
    if shots.is_empty() {
        return Err(invalid("no shots to attribute"));
    }
    prepare_out(cfg)?;
    let mode = ObservableMode::from_label_len(ck.params.config.label_len)?;
    let k = cfg.attribute.top_k;
    let records: Vec<CliResult<AttributionRecord>> = par::map_range(shots.len(), |i| {
        let s = &shots[i];
        let a = integrated_gradients(&ck.params, &code, &s.history, cfg.attribute.m_steps)?;
        let scores = map_attributions_to_qubits(&a.detectors, &code)?;
        let top = top_k(&scores, k);
        let truth = true_qubits(s);
        Ok(AttributionRecord {
            shot: i,
            label: s.label.as_slice().to_vec(),
            target: a.target.as_slice().to_vec(),
            grid: attribution_grid(&a.detectors, &code)?,
            hit: truth.iter().any(|q| top.contains(q)),
            detectors: a.detectors,
            scores,
            top,
            true_qubits: truth,
            f_input: a.f_input,
            f_baseline: a.f_baseline,
            residual: a.residual,
            complete: a.complete,
        })
    });
    let records: Vec<AttributionRecord> = records.into_iter().collect::<CliResult<_>>()?;

    // matching with plain, oracle-informed and attribution-informed priors
    let noise = NoiseModel::code_capacity(cfg.noise.p);
    let mut plain_ok = 0;
    let mut oracle_ok = 0;
    let mut saliency_ok = 0;
    let by_rounds = |r: usize| MwpmDecoder::new(&code, &noise, r, mode);
    for (s, rec) in shots.iter().zip(&records) {
        let base = by_rounds(s.history.rounds())?;
        let reweighted = |scores: &[f64]| -> CliResult<MwpmDecoder> {
            let z = reweight_with_saliency(base.z_graph(), scores, cfg.lambda)?;
            let x = base.x_graph().map(|g| reweight_with_saliency(g, scores, cfg.lambda)).transpose()?;
            Ok(base.with_graphs(z, x))
        };
        let mut oracle = vec![0.0; code.n_data()];
        for &q in &rec.true_qubits {
            oracle[q] = 1.0;
        }
        plain_ok += usize::from(base.decode(&s.history)?.label == s.label);
        oracle_ok += usize::from(reweighted(&oracle)?.decode(&s.history)?.label == s.label);
        saliency_ok += usize::from(reweighted(&rec.scores)?.decode(&s.history)?.label == s.label);
    }
    let n = shots.len();
    let summary = AttributeSummary {
        n_shots: n,
        top_k: k,
        m_steps: cfg.attribute.m_steps,
        top_k_hit_rate: records.iter().filter(|r| r.hit).count() as f64 / n as f64,
        complete_shots: records.iter().filter(|r| r.complete).count(),
        max_residual: records.iter().map(|r| r.residual).fold(0.0, f64::max),
        lambda: cfg.lambda,
        mwpm_accuracy: plain_ok as f64 / n as f64,
        oracle_reweighted_accuracy: oracle_ok as f64 / n as f64,
        saliency_reweighted_accuracy: saliency_ok as f64 / n as f64,
    };
    let mut text = serde_json::to_string(&json!({"format": "diffqec-attr-1", "n_shots": n}))?;
    text.push('\n');
    for r in &records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    std::fs::write(cfg.out.join("attributions.jsonl"), text)?;
    write_json(&cfg.out.join("attribute_summary.json"), &summary)?;
    Ok(summary)
}

// ---- bench --------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub decoder: String,
    pub d: usize,
    pub rounds: usize,
    /// Decoding-graph nodes (matching) or detectors (others).
    pub nodes: usize,
    pub edges: usize,
    pub shots: usize,
    pub mean_us: f64,
    pub median_us: f64,
    pub trained: bool,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per-shot decode latency for each decoder and distance. The diffusion
/// decoder uses the configured checkpoint when its distance matches and an
/// untrained model of the configured size otherwise.
pub fn cmd_bench(cfg: &RunConfig) -> CliResult<Vec<BenchRow>> {
    prepare_out(cfg)?;
    let seed = cfg.seed.unwrap_or(0);
    let r = cfg.rounds[0];
    let noise = cfg.noise_model();
    let ck = match &cfg.checkpoint {
        Some(p) => Some(load_checkpoint(p)?),
        None => None,
    };
    let n = cfg.bench.shots.max(1);
    let mut rows = Vec::new();
    for &d in &cfg.bench.distances {
        let code = SurfaceCode::rotated(d)?;
        let shots = simulate_shots(&code, &noise, r, cfg.observables, derive_seed(seed, d as u64), 0..n as u64)?;
        for name in &cfg.bench.decoders {
            let mut lat = Vec::with_capacity(n);
            let (nodes, edges, trained) = match name.as_str() {
                "mwpm" => {
                    let dec = MwpmDecoder::new(&code, &noise, r, cfg.observables)?;
                    for s in &shots {
                        let t0 = Instant::now();
                        dec.decode(&s.history)?;
                        lat.push(t0.elapsed().as_secs_f64() * 1e6);
                    }
                    let graphs = std::iter::once(dec.z_graph()).chain(dec.x_graph());
                    let (nodes, edges) = graphs.fold((0, 0), |(a, b), g| (a + g.n_nodes(), b + g.edges().len()));
                    (nodes, edges, true)
                }
                "diffqec" => {
                    let (params, schedule, trained) = match &ck {
                        Some(c) if c.params.config.d == d => (c.params.clone(), c.schedule.clone(), true),
                        _ => {
                            let mut conf = cfg.denoiser_config();
                            conf.d = d;
                            let mut p = DenoiserParams::init(conf, &mut stream_rng(derive_seed(seed, 40), d as u64))?;
                            p.assume_fitted();
                            (p, NoiseSchedule::cosine(cfg.model.steps, cfg.model.offset)?, false)
                        }
                    };
                    for (i, s) in shots.iter().enumerate() {
                        let mut rng = stream_rng(seed, i as u64);
                        let t0 = Instant::now();
                        decode(&params, &schedule, &s.history, cfg.chains, &mut rng)?;
                        lat.push(t0.elapsed().as_secs_f64() * 1e6);
                    }
                    (r * code.n_stabilizers(), 0, trained)
                }
                "ml" | "lookup" => {
                    if d != 3 || r != 1 || noise.p_meas != 0.0 {
                        continue;
                    }
                    let oracle = MlOracle::new(&code, &noise)?;
                    let table = build_lookup(&code, &noise, cfg.observables)?;
                    for s in &shots {
                        let t0 = Instant::now();
                        if name == "ml" {
                            oracle.decode_history(&s.history, cfg.observables)?;
                        } else {
                            table.decode_history(&s.history)?;
                        }
                        lat.push(t0.elapsed().as_secs_f64() * 1e6);
                    }
                    (code.n_stabilizers(), 0, true)
                }
                other => return Err(invalid(format!("unknown bench decoder {other:?}"))),
            };
            rows.push(BenchRow {
                decoder: name.clone(),
                d,
                rounds: r,
                nodes,
                edges,
                shots: n,
                mean_us: lat.iter().sum::<f64>() / n as f64,
                median_us: median(&mut lat),
                trained,
            });
        }
    }
    let mut csv = String::from("decoder,d,rounds,nodes,edges,shots,mean_us,median_us,trained\n");
    for b in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{:.3},{:.3},{}\n",
            b.decoder, b.d, b.rounds, b.nodes, b.edges, b.shots, b.mean_us, b.median_us, b.trained
        ));
    }
    std::fs::write(cfg.out.join("bench.csv"), csv)?;
    Ok(rows)
}
