//! End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
//! status if any criterion fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use diffqec::analysis::{integrated_gradients, EvalReport, PostselectReport};
use diffqec::baselines::MlOracle;
use diffqec::dataset::read_dataset;
use diffqec::nn::gradcheck::{finite_difference_check, sample_coordinates, FD_STEP, GROUPS};
use diffqec::nn::train::draw_items;
use diffqec::nn::{Checkpoint, DenoiserConfig, DenoiserParams};
use diffqec::noise::Sample;
use diffqec::rng::stream_rng;
use diffqec::{NoiseModel, ObservableMode, SurfaceCode};
use diffqec_cli::commands::{cmd_attribute, cmd_bench, cmd_decode, cmd_gen, cmd_postselect, cmd_train};
use diffqec_cli::verify::{closed_form_gap, mwpm_vs_bruteforce, reverse_posterior_tv};
use diffqec_cli::RunConfig;
use rand::Rng;

type Outcome = Result<(bool, String), String>;

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const SEED: u64 = 20_241_019;

fn closed_form() -> Outcome {
    let gap = closed_form_gap(32)?;
    Ok((gap <= 1e-12, format!("max kernel gap {gap:.3e} (limit 1e-12)")))
}

fn reverse_posterior() -> Outcome {
    let (exact, sampled) = reverse_posterior_tv(3, 8, &[0.15, 0.6, 0.85], 1_000_000, SEED)?;
    Ok((
        sampled < 5e-3,
        format!("TV over 1e6 draws {sampled:.2e} (limit 5e-3); factorization TV {exact:.1e}"),
    ))
}

fn gradients() -> Outcome {
    let config = DenoiserConfig::new(3, 1);
    let code = SurfaceCode::rotated(3).map_err(s)?;
    let shots = diffqec::dataset::simulate_shots(
        &code,
        &NoiseModel::phenomenological(0.06, 0.03),
        3,
        ObservableMode::Single,
        SEED,
        0..6,
    )
    .map_err(s)?;
    let refs: Vec<&Sample> = shots.iter().collect();
    let sched = diffqec::NoiseSchedule::cosine(config.steps, diffqec::diffusion::DEFAULT_OFFSET).map_err(s)?;
    let items = draw_items(&refs, &sched, &mut stream_rng(SEED, 1)).map_err(s)?;
    let mut params = DenoiserParams::init(config, &mut stream_rng(SEED, 2)).map_err(s)?;
    let mut rng = stream_rng(SEED, 3);
    for t in &mut params.tensors {
        for v in &mut t.data {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    let coords = sample_coordinates(&params, 1250, &mut stream_rng(SEED, 4));
    let entries: Vec<_> = finite_difference_check(&params, &items, &coords, FD_STEP)
        .map_err(s)?
        .into_iter()
        .flatten()
        .collect();
    let failures = entries.iter().filter(|e| !(e.rel_error < 1e-5)).count();
    let worst = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    let per_group: Vec<String> = GROUPS
        .iter()
        .map(|g| format!("{g}={}", entries.iter().filter(|e| e.group == *g).count()))
        .collect();
    let covered = GROUPS.iter().all(|g| entries.iter().any(|e| e.group == *g));
    Ok((
        entries.len() >= 1000 && failures == 0 && covered,
        format!(
            "{} coordinates ({}), {failures} above 1e-5, worst {worst:.2e}",
            entries.len(),
            per_group.join(" ")
        ),
    ))
}

fn matching() -> Outcome {
    let (n, bad) = mwpm_vs_bruteforce()?;
    Ok((n == 512 && bad == 0, format!("{n} X-error patterns, {bad} mismatches")))
}

/// Products of the trained-model workflow shared by criteria 5 to 8.
struct Trained {
    train_cfg: RunConfig,
    eval_cfg: RunConfig,
    reports: Vec<EvalReport>,
    ml_exact: f64,
}

fn base_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = Some(SEED);
    cfg.out = out.to_path_buf();
    cfg.d = 3;
    cfg.rounds = vec![1];
    cfg.noise.p = 0.08;
    cfg
}

fn train_and_decode(root: &Path) -> Result<Trained, String> {
    let mut train_cfg = base_config(&root.join("train"));
    train_cfg.shots = 200_000;
    train_cfg.train.epochs_per_stage = 2;
    cmd_gen(&train_cfg).map_err(s)?;
    let t = cmd_train(&train_cfg).map_err(s)?;

    let mut eval_cfg = base_config(&root.join("eval"));
    eval_cfg.seed = Some(SEED + 1);
    eval_cfg.shots = 50_000;
    let gen = cmd_gen(&eval_cfg).map_err(s)?;
    eval_cfg.dataset = Some(gen[0].path.clone());
    eval_cfg.checkpoint = Some(t.checkpoint);
    // odd chain count so the majority vote never ties
    eval_cfg.chains = 7;
    let mut reports = Vec::new();
    for dec in ["diffqec", "mwpm", "ml"] {
        eval_cfg.decoder = dec.into();
        reports.push(cmd_decode(&eval_cfg).map_err(s)?.report);
    }
    let code = SurfaceCode::rotated(3).map_err(s)?;
    let ml_exact = MlOracle::new(&code, &NoiseModel::code_capacity(0.08))
        .map_err(s)?
        .error_rate(ObservableMode::Single);
    Ok(Trained {
        train_cfg,
        eval_cfg,
        reports,
        ml_exact,
    })
}

fn decoding_quality(tr: &Trained) -> Outcome {
    let [ours, mwpm, ml] = [&tr.reports[0], &tr.reports[1], &tr.reports[2]];
    let vs_mwpm = ours.ler <= mwpm.ler || ours.overlaps(mwpm);
    let vs_ml = ours.ler <= 1.25 * tr.ml_exact;
    Ok((
        vs_mwpm && vs_ml,
        format!(
            "LER diffqec {:.5} [{:.5},{:.5}], mwpm {:.5} [{:.5},{:.5}], ml {:.5}, exact ml {:.5}; ratio to exact ml {:.3}",
            ours.ler,
            ours.ci_low,
            ours.ci_high,
            mwpm.ler,
            mwpm.ci_low,
            mwpm.ci_high,
            ml.ler,
            tr.ml_exact,
            ours.ler / tr.ml_exact
        ),
    ))
}

fn postselection(tr: &Trained) -> Outcome {
    let mut cfg = tr.eval_cfg.clone();
    cfg.rho = vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
    cfg.predictions = vec![cfg.predictions_path("diffqec"), cfg.predictions_path("mwpm")];
    let reports = cmd_postselect(&cfg).map_err(s)?;
    let curve = |name: &str| -> Vec<&PostselectReport> { reports.iter().filter(|r| r.report.decoder == name).collect() };
    let ours = curve("diffqec");
    let rand = curve("mwpm+random");
    if ours.len() != 6 || rand.len() != 6 {
        return Err("missing post-selection rows".into());
    }
    // fidelity 1 − 2·LER is non-decreasing iff LER is non-increasing
    let monotone = ours.windows(2).all(|w| w[1].report.ler <= w[0].report.ler || w[1].report.overlaps(&w[0].report));
    let dominates = ours
        .iter()
        .zip(&rand)
        .all(|(a, b)| a.report.ler <= b.report.ler || a.report.overlaps(&b.report));
    let fmt = |c: &[&PostselectReport]| c.iter().map(|r| format!("{:.4}", r.report.fidelity)).collect::<Vec<_>>().join(" ");
    Ok((
        monotone && dominates,
        format!("fidelity diffqec [{}] vs mwpm+random [{}]", fmt(&ours), fmt(&rand)),
    ))
}

fn completeness(tr: &Trained) -> Outcome {
    let ck = Checkpoint::load(&tr.eval_cfg.checkpoint_path()).map_err(s)?;
    let ds = read_dataset(tr.eval_cfg.dataset.as_ref().ok_or("no eval dataset")?).map_err(s)?;
    let code = SurfaceCode::rotated(3).map_err(s)?;
    let shots: Vec<&Sample> = ds.samples.iter().filter(|x| x.history.has_events()).take(50).collect();
    let attrs: Vec<_> = diffqec::par::map_slice(&shots, |x| integrated_gradients(&ck.params, &code, &x.history, 256))
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(s)?;
    let complete = attrs.iter().filter(|a| a.complete).count();
    let worst = attrs.iter().map(|a| a.residual).fold(0.0, f64::max);
    Ok((
        shots.len() == 50 && complete == 50,
        format!("{complete}/{} shots complete at m=256, worst residual {worst:.2e}", shots.len()),
    ))
}

fn usefulness(tr: &Trained) -> Outcome {
    let mut cfg = tr.eval_cfg.clone();
    cfg.dataset = None;
    cfg.out = tr.eval_cfg.out.join("attr");
    cfg.attribute.shots = 500;
    cfg.attribute.m_steps = 256;
    cfg.attribute.top_k = 2;
    let sum = cmd_attribute(&cfg).map_err(s)?;
    Ok((
        sum.n_shots == 500 && sum.top_k_hit_rate > 0.5 && sum.oracle_reweighted_accuracy >= sum.mwpm_accuracy,
        format!(
            "top-2 hit rate {:.3} over {} shots; mwpm {:.3}, oracle-reweighted {:.3}, saliency-reweighted {:.3}",
            sum.top_k_hit_rate, sum.n_shots, sum.mwpm_accuracy, sum.oracle_reweighted_accuracy, sum.saliency_reweighted_accuracy
        ),
    ))
}

fn small_config(out: &Path) -> RunConfig {
    let mut cfg = base_config(out);
    cfg.rounds = vec![1, 3];
    cfg.noise.kind = diffqec::noise::NoiseKind::Phenomenological;
    cfg.noise.p = 0.05;
    cfg.noise.p_meas = 0.02;
    cfg.shots = 2000;
    cfg.model.hidden = 32;
    cfg.model.steps = 16;
    cfg.train.max_steps = Some(30);
    cfg.chains = 3;
    cfg
}

fn stable_lines(path: &Path) -> Result<Vec<serde_json::Value>, String> {
    std::fs::read_to_string(path)
        .map_err(s)?
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).map_err(s)?;
            if let Some(o) = v.as_object_mut() {
                o.remove("latency_us");
                o.remove("dataset");
            }
            Ok(v)
        })
        .collect()
}

fn determinism(root: &Path) -> Outcome {
    let mut outs: Vec<(RunConfig, Vec<PathBuf>)> = Vec::new();
    for name in ["det_a", "det_b"] {
        let mut cfg = small_config(&root.join(name));
        let datasets: Vec<PathBuf> = cmd_gen(&cfg).map_err(s)?.into_iter().map(|g| g.path).collect();
        cmd_train(&cfg).map_err(s)?;
        for dec in ["diffqec", "mwpm"] {
            cfg.decoder = dec.into();
            cmd_decode(&cfg).map_err(s)?;
        }
        outs.push((cfg, datasets));
    }
    let (a, b) = (&outs[0], &outs[1]);
    let mut same = Vec::new();
    for (pa, pb) in a.1.iter().zip(&b.1) {
        same.push(std::fs::read(pa).map_err(s)? == std::fs::read(pb).map_err(s)?);
    }
    same.push(std::fs::read(a.0.checkpoint_path()).map_err(s)? == std::fs::read(b.0.checkpoint_path()).map_err(s)?);
    for dec in ["diffqec", "mwpm"] {
        same.push(stable_lines(&a.0.predictions_path(dec))? == stable_lines(&b.0.predictions_path(dec))?);
    }
    let ok = same.iter().filter(|&&v| v).count();
    Ok((ok == same.len(), format!("{ok}/{} artifacts identical across two runs", same.len())))
}

fn latency(root: &Path, checkpoint: Option<PathBuf>) -> Outcome {
    let mut cfg = base_config(&root.join("bench"));
    cfg.checkpoint = checkpoint;
    cfg.bench.distances = vec![3, 5, 7];
    cfg.bench.decoders = vec!["diffqec".into(), "mwpm".into()];
    cfg.bench.shots = 100;
    let rows = cmd_bench(&cfg).map_err(s)?;
    let mut ok = rows.len() == 6 && cfg.out.join("bench.csv").exists();
    let mut detail = Vec::new();
    for dec in ["diffqec", "mwpm"] {
        let r: Vec<_> = rows.iter().filter(|r| r.decoder == dec).collect();
        ok &= r.iter().map(|x| x.d).collect::<Vec<_>>() == [3, 5, 7];
        ok &= r.windows(2).all(|w| w[0].nodes <= w[1].nodes && w[0].edges <= w[1].edges);
        ok &= r.iter().all(|x| x.shots == 100 && x.mean_us.is_finite() && x.median_us.is_finite());
        detail.push(format!(
            "{dec}: {}",
            r.iter()
                .map(|x| format!("d={} nodes={} mean={:.0}us", x.d, x.nodes, x.mean_us))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    Ok((ok, detail.join("; ")))
}

fn report(n: usize, name: &str, started: Instant, outcome: Outcome) -> bool {
    let secs = started.elapsed().as_secs_f64();
    let (pass, detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    println!("{} [{n}] {name} ({secs:.1}s): {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn main() {
    let root = tempfile::tempdir().expect("temporary directory");
    let mut all = true;

    let t = Instant::now();
    all &= report(1, "closed-form cumulative kernel", t, closed_form());
    let t = Instant::now();
    all &= report(2, "reverse posterior vs enumeration", t, reverse_posterior());
    let t = Instant::now();
    all &= report(3, "gradient check", t, gradients());
    let t = Instant::now();
    all &= report(4, "matching vs brute force", t, matching());

    let t = Instant::now();
    let trained = train_and_decode(root.path());
    match &trained {
        Ok(tr) => {
            all &= report(5, "decoding quality", t, decoding_quality(tr));
            let t = Instant::now();
            all &= report(6, "post-selection", t, postselection(tr));
            let t = Instant::now();
            all &= report(7, "integrated-gradients completeness", t, completeness(tr));
            let t = Instant::now();
            all &= report(8, "attribution usefulness", t, usefulness(tr));
        }
        Err(e) => {
            for (n, name) in [(5, "decoding quality"), (6, "post-selection"), (7, "integrated-gradients completeness"), (8, "attribution usefulness")] {
                all &= report(n, name, t, Err(format!("training workflow failed: {e}")));
            }
        }
    }

    let t = Instant::now();
    all &= report(9, "determinism", t, determinism(root.path()));
    let t = Instant::now();
    let ckpt = trained.as_ref().ok().map(|tr| tr.train_cfg.checkpoint_path());
    all &= report(10, "latency tables", t, latency(root.path(), ckpt));

    if !all {
        std::process::exit(1);
    }
}
