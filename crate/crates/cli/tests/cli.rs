use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
version = "diffqec-config-1"
d = 3
rounds = [1, 2]
shots = 240
chains = 3
rho = [0.0, 0.25, 0.5]

[noise]
kind = "phenomenological"
p = 0.06
p_meas = 0.02

[model]
steps = 8
hidden = 16
layers = 2
conv_channels = [4, 8]
time_dim = 8

[train]
batch_size = 64
max_steps = 12

[attribute]
m_steps = 16
shots = 12

[bench]
distances = [3, 5]
shots = 4
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffqec"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    dir
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Prediction rows without wall-clock timings or the run-specific input path.
fn stable_rows(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            if let Some(o) = v.as_object_mut() {
                o.remove("latency_us");
                o.remove("dataset");
            }
            v
        })
        .collect()
}

fn pipeline(dir: &Path, out: &str) {
    for cmd in ["gen", "train"] {
        let o = run(dir, &[cmd, "--config", "run.toml", "--seed", "42", "--out", out]);
        assert_eq!(code(&o), 0, "{cmd}: {}", stderr(&o));
    }
    for dec in ["diffqec", "mwpm"] {
        let o = run(dir, &["decode", "--config", "run.toml", "--seed", "42", "--out", out, "--decoder", dec]);
        assert_eq!(code(&o), 0, "decode {dec}: {}", stderr(&o));
    }
}

#[test]
fn missing_seed_is_a_validation_error() {
    let dir = setup();
    let o = run(dir.path(), &["gen", "--config", "run.toml"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
}

#[test]
fn bad_arguments_exit_with_one() {
    let dir = setup();
    assert_eq!(code(&run(dir.path(), &["gen", "--seed", "1", "--d", "4"])), 1);
    assert_eq!(code(&run(dir.path(), &["gen", "--seed", "1", "--p", "1.5"])), 1);
    assert_eq!(code(&run(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&run(dir.path(), &["decode", "--seed", "1", "--decoder", "oracle"])), 1);
    std::fs::write(dir.path().join("typo.toml"), "seed = 1\nshotz = 5\n").unwrap();
    let o = run(dir.path(), &["gen", "--config", "typo.toml"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("shotz"), "{}", stderr(&o));
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = setup();
    let o = run(dir.path(), &["decode", "--config", "run.toml", "--seed", "1", "--out", "empty", "--decoder", "mwpm"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn pipeline_is_reproducible_and_complete() {
    let dir = setup();
    let p = dir.path();
    pipeline(p, "a");
    pipeline(p, "b");

    for f in ["dataset_d3_r1.jsonl", "dataset_d3_r2.jsonl", "checkpoint.json", "loss.csv"] {
        let a = std::fs::read(p.join("a").join(f)).unwrap();
        let b = std::fs::read(p.join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between identical runs");
    }
    for dec in ["diffqec", "mwpm"] {
        let f = format!("predictions_{dec}.jsonl");
        let rows = stable_rows(&p.join("a").join(&f));
        assert_eq!(rows, stable_rows(&p.join("b").join(&f)));
        // header plus one row per shot
        assert_eq!(rows.len(), 1 + 240);
        assert!(p.join("a").join(format!("report_{dec}.json")).exists());
    }

    let o = run(p, &["postselect", "--config", "run.toml", "--seed", "42", "--out", "a"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(p.join("a/postselect.csv")).unwrap();
    assert!(csv.lines().count() > 3);

    let o = run(p, &["attribute", "--config", "run.toml", "--seed", "42", "--out", "a"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let attr = std::fs::read_to_string(p.join("a/attributions.jsonl")).unwrap();
    assert_eq!(attr.lines().count(), 1 + 12);

    let o = run(p, &["bench", "--config", "run.toml", "--seed", "42", "--out", "a"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let bench = std::fs::read_to_string(p.join("a/bench.csv")).unwrap();
    assert_eq!(bench.lines().count(), 1 + 2 * 2);
}

#[test]
fn corrupted_checkpoint_is_reported() {
    let dir = setup();
    let p = dir.path();
    for cmd in ["gen", "train"] {
        assert_eq!(code(&run(p, &[cmd, "--config", "run.toml", "--seed", "5", "--out", "c"])), 0);
    }
    let ckpt = p.join("c/checkpoint.json");
    let text = std::fs::read_to_string(&ckpt).unwrap();
    std::fs::write(&ckpt, &text[..text.len() / 2]).unwrap();
    let o = run(p, &["decode", "--config", "run.toml", "--seed", "5", "--out", "c"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("checkpoint"), "{}", stderr(&o));

    std::fs::write(&ckpt, text.replace("diffqec-ckpt-1", "diffqec-ckpt-0")).unwrap();
    let o = run(p, &["decode", "--config", "run.toml", "--seed", "5", "--out", "c"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("diffqec-ckpt-1"), "{}", stderr(&o));
}

#[test]
fn verify_reports_every_check() {
    let dir = setup();
    let o = run(dir.path(), &["verify", "--out", "v"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 10, "{text}");
    assert!(dir.path().join("v/verify.json").exists());
}
