//! Invariant suite: schedule identities, posterior enumeration, gradient
//! checks, matching against brute force, oracle normalization and I/O.

use rand::Rng;
use serde::Serialize;

use diffqec::analysis::attribution::integrated_gradients;
use diffqec::analysis::metrics::{wilson_interval, Z95};
use diffqec::baselines::{build_decoding_graph, build_lookup, mwpm_decode, MlOracle};
use diffqec::bits::BitVector;
use diffqec::code::{ObservableMode, PauliKind, SurfaceCode};
use diffqec::dataset::simulate_shots;
use diffqec::diffusion::{reverse_probabilities, reverse_step, NoiseSchedule, DEFAULT_OFFSET};
use diffqec::nn::gradcheck::{finite_difference_check, sample_coordinates, FD_STEP};
use diffqec::nn::train::draw_items;
use diffqec::nn::{decode_shots, Checkpoint, DenoiserConfig, DenoiserParams};
use diffqec::noise::{NoiseModel, Sample, SyndromeHistory};
use diffqec::rng::stream_rng;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }

    fn from_result(name: &str, r: Result<(bool, String), String>) -> Self {
        match r {
            Ok((ok, detail)) => Self::new(name, ok, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

type CheckResult = Result<(bool, String), String>;

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Largest deviation of the explicit kernel product from the closed form over `t`.
pub fn closed_form_gap(steps: usize) -> Result<f64, String> {
    let sched = NoiseSchedule::cosine(steps, DEFAULT_OFFSET).map_err(s)?;
    let mut worst = 0.0f64;
    for t in 1..=steps {
        let a = sched.bar_alpha(t);
        let closed = [[(1.0 + a) / 2.0, (1.0 - a) / 2.0], [(1.0 - a) / 2.0, (1.0 + a) / 2.0]];
        let k = sched.cumulative_kernel(t).map_err(s)?;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((k.0[i][j] - closed[i][j]).abs());
            }
        }
    }
    Ok(worst)
}

/// Exact distribution of `x_{t−1}` by enumerating `x_0` and applying Bayes'
/// rule to the forward kernels, for all `2^L` states.
pub fn enumerate_reverse(x_t: &BitVector, t: usize, p0_one: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>, String> {
    let l = x_t.len();
    let step = sched.kernel_at(t).map_err(s)?;
    let prev = sched.cumulative_kernel(t - 1).map_err(s)?;
    let cur = sched.cumulative_kernel(t).map_err(s)?;
    let mut out = vec![0.0; 1 << l];
    for x0 in 0..1u64 << l {
        let prior: f64 = (0..l)
            .map(|i| if x0 >> i & 1 == 1 { p0_one[i] } else { 1.0 - p0_one[i] })
            .product();
        let x0b = |i: usize| x0 >> i & 1 == 1;
        let evidence: f64 = (0..l).map(|i| cur.get(x0b(i), x_t.get(i))).product();
        for (xp, slot) in out.iter_mut().enumerate() {
            let xpb = |i: usize| xp >> i & 1 == 1;
            let joint: f64 = (0..l)
                .map(|i| step.get(xpb(i), x_t.get(i)) * prev.get(x0b(i), xpb(i)))
                .product();
            *slot += prior * joint / evidence;
        }
    }
    Ok(out)
}

/// Largest total-variation distance between the factorized reverse sampler
/// (exact probabilities and `draws` samples) and enumeration, over all `x_t`
/// and `t ≥ 2`. Returns `(analytic, empirical)`.
pub fn reverse_posterior_tv(l: usize, steps: usize, p0_one: &[f64], draws: usize, seed: u64) -> Result<(f64, f64), String> {
    let sched = NoiseSchedule::cosine(steps, DEFAULT_OFFSET).map_err(s)?;
    let mut rng = stream_rng(seed, 0);
    let (mut exact_tv, mut sample_tv) = (0.0f64, 0.0f64);
    for t in 2..=steps {
        for xt in 0..1u64 << l {
            let x_t = BitVector::from_mask(l, xt);
            let truth = enumerate_reverse(&x_t, t, p0_one, &sched)?;
            let probs = reverse_probabilities(&x_t, t, p0_one, &sched).map_err(s)?;
            let factorized: Vec<f64> = (0..1usize << l)
                .map(|x| (0..l).map(|i| if x >> i & 1 == 1 { probs[i] } else { 1.0 - probs[i] }).product())
                .collect();
            let tv = |p: &[f64]| 0.5 * p.iter().zip(&truth).map(|(a, b)| (a - b).abs()).sum::<f64>();
            exact_tv = exact_tv.max(tv(&factorized));
            if draws > 0 && t == steps / 2 && xt == 0b101 & ((1 << l) - 1) {
                let mut counts = vec![0usize; 1 << l];
                for _ in 0..draws {
                    let x = reverse_step(&x_t, t, p0_one, &sched, &mut rng).map_err(s)?;
                    counts[x.to_mask() as usize] += 1;
                }
                let emp: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
                sample_tv = sample_tv.max(tv(&emp));
            }
        }
    }
    Ok((exact_tv, sample_tv))
}

/// Every X-only error pattern at d=3 in one round: the matching correction
/// reproduces the syndrome and has the brute-force minimum weight.
/// Returns `(patterns checked, mismatches)`.
pub fn mwpm_vs_bruteforce() -> Result<(usize, usize), String> {
    let code = SurfaceCode::rotated(3).map_err(s)?;
    let n = code.n_data();
    let graph = build_decoding_graph(&code, &NoiseModel::code_capacity(0.05), 1, PauliKind::Z).map_err(s)?;
    let mut min_weight = vec![usize::MAX; 1 << code.n_z()];
    for m in 0..1u64 << n {
        let x = BitVector::from_mask(n, m);
        let sz = code.h_z().mul_vec(&x).map_err(s)?;
        let w = &mut min_weight[sz.to_mask() as usize];
        *w = (*w).min(x.weight());
    }
    let mut bad = 0;
    for m in 0..1u64 << n {
        let x = BitVector::from_mask(n, m);
        let sz = code.h_z().mul_vec(&x).map_err(s)?;
        let res = mwpm_decode(&graph, &sz.support()).map_err(s)?;
        let consistent = code.h_z().mul_vec(&res.correction).map_err(s)? == sz;
        let edge_w = graph.edges()[0].weight;
        let weight_ok = res.correction.weight() == min_weight[sz.to_mask() as usize]
            && (res.weight - edge_w * res.correction.weight() as f64).abs() < 1e-9;
        if !(consistent && weight_ok && res.exact) {
            bad += 1;
        }
    }
    Ok((1 << n, bad))
}

/// Small architecture used by the quick checks.
pub fn small_config(label_len: usize) -> DenoiserConfig {
    DenoiserConfig {
        d: 3,
        label_len,
        steps: 8,
        hidden: 16,
        layers: 2,
        conv_channels: [4, 8],
        time_dim: 8,
    }
}

/// Parameters with every entry jittered so no group sits at its initial value.
pub fn jittered_params(config: DenoiserConfig, seed: u64) -> Result<DenoiserParams, String> {
    let mut p = DenoiserParams::init(config, &mut stream_rng(seed, 0)).map_err(s)?;
    let mut rng = stream_rng(seed, 1);
    for t in &mut p.tensors {
        for v in &mut t.data {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    p.assume_fitted();
    Ok(p)
}

/// Finite-difference check of at least `n` smooth coordinates spread over
/// every parameter group. Returns `(checked, failures, worst relative error)`.
pub fn gradient_check(config: DenoiserConfig, n: usize, seed: u64) -> Result<(usize, usize, f64), String> {
    let code = SurfaceCode::rotated(config.d).map_err(s)?;
    let mode = ObservableMode::from_label_len(config.label_len).map_err(s)?;
    let noise = NoiseModel::phenomenological(0.06, 0.03);
    let shots: Vec<Sample> = simulate_shots(&code, &noise, 3, mode, seed, 0..6).map_err(s)?;
    let refs: Vec<&Sample> = shots.iter().collect();
    let sched = NoiseSchedule::cosine(config.steps, DEFAULT_OFFSET).map_err(s)?;
    let items = draw_items(&refs, &sched, &mut stream_rng(seed, 1)).map_err(s)?;
    let params = jittered_params(config, seed ^ 0x5eed)?;
    let coords = sample_coordinates(&params, n + n / 5, &mut stream_rng(seed, 2));
    let entries: Vec<_> = finite_difference_check(&params, &items, &coords, FD_STEP)
        .map_err(s)?
        .into_iter()
        .flatten()
        .take(n)
        .collect();
    let failures = entries.iter().filter(|e| !(e.rel_error < 1e-5)).count();
    let worst = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    Ok((entries.len(), failures, worst))
}

fn check_codes() -> CheckResult {
    for d in [3, 5, 7] {
        SurfaceCode::rotated(d).and_then(|c| c.validate()).map_err(s)?;
    }
    Ok((true, "d = 3, 5, 7 pass every structural invariant".into()))
}

fn check_schedule() -> CheckResult {
    let gap = closed_form_gap(32)?;
    Ok((gap <= 1e-12, format!("max |product − closed form| = {gap:.3e} (T=32)")))
}

fn check_posterior() -> CheckResult {
    let (exact, sampled) = reverse_posterior_tv(3, 8, &[0.2, 0.7, 0.45], 1_000_000, 17)?;
    Ok((
        exact < 1e-12 && sampled < 5e-3,
        format!("TV exact {exact:.2e}, sampled {sampled:.2e} over 1e6 draws (L=3, T=8)"),
    ))
}

fn check_gradients() -> CheckResult {
    let (n, bad, worst) = gradient_check(small_config(2), 240, 3)?;
    Ok((bad == 0 && n >= 200, format!("{n} coordinates, {bad} above 1e-5, worst {worst:.2e}")))
}

fn check_matching() -> CheckResult {
    let (n, bad) = mwpm_vs_bruteforce()?;
    Ok((bad == 0, format!("{n} X-only patterns at d=3, {bad} mismatches")))
}

fn check_ml() -> CheckResult {
    let code = SurfaceCode::rotated(3).map_err(s)?;
    let noise = NoiseModel::code_capacity(0.08);
    let oracle = MlOracle::new(&code, &noise).map_err(s)?;
    let lookup = build_lookup(&code, &noise, ObservableMode::Dual).map_err(s)?;
    let mut rng = stream_rng(23, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let idx = rng.random_range(0..oracle.n_syndromes());
        let r = oracle.decode_index(idx, ObservableMode::Dual).map_err(s)?;
        worst = worst.max((r.posteriors.iter().sum::<f64>() - 1.0).abs());
    }
    let mut agree = true;
    for idx in 0..oracle.n_syndromes() {
        let sx = BitVector::from_mask(code.n_x(), idx as u64 & ((1 << code.n_x()) - 1));
        let sz = BitVector::from_mask(code.n_z(), idx as u64 >> code.n_x());
        agree &= lookup.decode(&sx, &sz).map_err(s)? == &oracle.decode_index(idx, ObservableMode::Dual).map_err(s)?.label;
    }
    Ok((
        worst <= 1e-12 && agree,
        format!("posterior normalization error {worst:.1e}; lookup agrees with oracle: {agree}"),
    ))
}

fn check_wilson() -> CheckResult {
    let (lo, hi) = wilson_interval(50, 1000, Z95);
    Ok(((lo - 0.03813).abs() < 1e-4 && (hi - 0.06531).abs() < 1e-4, format!("50/1000 → [{lo:.5}, {hi:.5}]")))
}

fn check_checkpoint() -> CheckResult {
    let params = jittered_params(small_config(1), 4)?;
    let ck = Checkpoint {
        params,
        schedule: NoiseSchedule::cosine(8, DEFAULT_OFFSET).map_err(s)?,
    };
    let v = ck.to_json().map_err(s)?;
    let back = Checkpoint::from_json(&v).map_err(s)?;
    let mut broken = v.clone();
    broken["params"][3]["values"] = serde_json::json!([1.0]);
    let err = Checkpoint::from_json(&broken).err().map(|e| e.to_string()).unwrap_or_default();
    let mut tagged = v;
    tagged["format"] = serde_json::json!("diffqec-ckpt-0");
    let tag_err = Checkpoint::from_json(&tagged).is_err();
    Ok((
        back == ck && err.contains("conv2.b") && tag_err,
        format!("round trip exact: {}; corruption diagnostic: {err}", back == ck),
    ))
}

fn check_ig() -> CheckResult {
    let params = jittered_params(small_config(1), 5)?;
    let code = SurfaceCode::rotated(3).map_err(s)?;
    let shots = simulate_shots(&code, &NoiseModel::code_capacity(0.1), 2, ObservableMode::Single, 6, 0..5).map_err(s)?;
    let mut worst = 0.0f64;
    let mut all = true;
    for sh in &shots {
        let a = integrated_gradients(&params, &code, &sh.history, 256).map_err(s)?;
        all &= a.complete;
        worst = worst.max(a.residual);
    }
    Ok((all, format!("5 shots at m=256, worst residual {worst:.2e}")))
}

fn check_determinism() -> CheckResult {
    let code = SurfaceCode::rotated(3).map_err(s)?;
    let noise = NoiseModel::phenomenological(0.05, 0.02);
    let a = simulate_shots(&code, &noise, 3, ObservableMode::Single, 8, 0..64).map_err(s)?;
    let b = simulate_shots(&code, &noise, 3, ObservableMode::Single, 8, 0..64).map_err(s)?;
    let params = jittered_params(small_config(1), 9)?;
    let sched = NoiseSchedule::cosine(8, DEFAULT_OFFSET).map_err(s)?;
    let hs: Vec<&SyndromeHistory> = a.iter().map(|x| &x.history).collect();
    let d1 = decode_shots(&params, &sched, &hs, 3, 1).map_err(s)?;
    let d2 = decode_shots(&params, &sched, &hs[..32], 3, 1).map_err(s)?;
    let ok = a == b && d1[..32] == d2[..];
    Ok((ok, "simulation and decoding repeat exactly; shot results do not depend on batch size".into()))
}

/// Runs every check in order.
pub fn run_suite() -> Vec<Check> {
    let checks: [(&str, fn() -> CheckResult); 10] = [
        ("code_invariants", check_codes),
        ("schedule_closed_form", check_schedule),
        ("reverse_posterior_enumeration", check_posterior),
        ("gradient_check", check_gradients),
        ("mwpm_vs_bruteforce", check_matching),
        ("ml_oracle_and_lookup", check_ml),
        ("wilson_interval", check_wilson),
        ("checkpoint_format", check_checkpoint),
        ("ig_completeness", check_ig),
        ("determinism", check_determinism),
    ];
    checks.iter().map(|(name, f)| Check::from_result(name, f())).collect()
}

/// Runs the suite, prints one line per check and writes `verify.json`.
pub fn cmd_verify(cfg: &crate::RunConfig) -> crate::CliResult<Vec<Check>> {
    let checks = run_suite();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(cfg.out.join("verify.json"), serde_json::to_string_pretty(&checks)? + "\n")?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(crate::CliError::Runtime(format!("{failed} invariant check(s) failed")));
    }
    Ok(checks)
}
