use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn tabkg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tabkg")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = tabkg(args);
    assert!(
        out.status.success(),
        "tabkg {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

const TINY: &str = r#"
seed = 3
label = "late_flag"
holdout_fraction = 0.2

[fixture]
recipe = "mini-retail"
n_rows = 800

[[ensemble.providers]]
id = "perfect"
type = "stub-perfect"
params = { truth = "truth.json" }

[generator]
epochs = 2
hidden_width = 32
sampler_steps = 8
"#;

#[test]
fn usage_errors_exit_with_1() {
    assert_eq!(tabkg(&[]).status.code(), Some(1));
    assert_eq!(tabkg(&["fixture", "--seed", "abc"]).status.code(), Some(1));
    assert_eq!(tabkg(&["pipeline"]).status.code(), Some(1));
    assert_eq!(tabkg(&["--config", "/no/such/config.toml", "fixture"]).status.code(), Some(1));
    assert_eq!(tabkg(&["--help"]).status.code(), Some(0));
}

#[test]
fn stage_failures_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fx");
    ok(&["fixture", "--rows", "50", "--out", s(&out)]);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"nodes\": [").unwrap();
    let res = tabkg(&[
        "validate",
        "--data",
        s(&out.join("data.csv")),
        "--metadata",
        s(&out.join("metadata.json")),
        "--graph",
        s(&bad),
        "--out",
        s(&dir.path().join("v")),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).starts_with("error:"));
    let res = tabkg(&["fixture", "--recipe", "no-such-recipe", "--out", s(&dir.path().join("x"))]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn fixture_output_depends_only_on_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    for (name, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        ok(&["fixture", "--rows", "300", "--seed", seed, "--out", s(&dir.path().join(name))]);
    }
    let read = |n: &str, f: &str| fs::read(dir.path().join(n).join(f)).unwrap();
    assert_eq!(read("a", "data.csv"), read("b", "data.csv"));
    assert_eq!(read("a", "truth.json"), read("b", "truth.json"));
    assert_eq!(read("a", "manifest.json"), read("b", "manifest.json"));
    assert_ne!(read("a", "data.csv"), read("c", "data.csv"));
    assert_eq!(read("a", "metadata.json"), read("c", "metadata.json"));
}

#[test]
fn evaluating_real_data_against_itself_scores_100() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    ok(&["fixture", "--recipe", "mini-procurement", "--rows", "400", "--out", s(&fx)]);
    let data = fx.join("data.csv");
    let ev = dir.path().join("ev");
    ok(&[
        "evaluate",
        "--real",
        s(&data),
        "--metadata",
        s(&fx.join("metadata.json")),
        "--synth",
        s(&data),
        "--graph",
        s(&fx.join("truth.json")),
        "--out",
        s(&ev),
    ]);
    let report = json(ev.join("eval_report.json"));
    for key in ["density", "correlation", "hcs", "mdi", "dsi"] {
        assert_eq!(report[key].as_f64(), Some(100.0), "{key}");
    }
    assert!(ev.join("eval_report.txt").exists());
}

#[test]
fn pipeline_equals_its_stages_run_by_hand() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.toml");
    fs::write(&config, TINY).unwrap();
    let cfg = s(&config);

    let pipe = dir.path().join("pipe");
    ok(&["pipeline", "--config", cfg, "--out", s(&pipe)]);

    let step = |name: &str| dir.path().join("steps").join(name);
    let run = |args: &[&str], stage: &str| {
        let out = step(stage);
        let mut full = args.to_vec();
        full.extend(["--config", cfg, "--out", s(&out)]);
        ok(&full);
    };
    run(&["fixture"], "fixture");
    let fx = step("fixture");
    let meta = fx.join("metadata.json");
    run(&["split", "--data", s(&fx.join("data.csv")), "--metadata", s(&meta)], "split");
    let train = step("split").join("train.csv");
    run(&["propose", "--data", s(&train), "--metadata", s(&meta), "--provider-base", s(&fx)], "propose");
    let candidate = step("propose").join("candidate.json");
    run(
        &["validate", "--data", s(&train), "--metadata", s(&meta), "--graph", s(&candidate), "--truth", s(&fx.join("truth.json"))],
        "validate",
    );
    let validated = step("validate").join("validated.json");
    run(&["compress", "--data", s(&train), "--metadata", s(&meta), "--graph", s(&validated)], "compress");
    let plan = step("compress").join("plan.json");
    run(&["train", "--data", s(&step("compress").join("compressed.csv")), "--plan", s(&plan)], "train");
    run(&["generate", "--model", s(&step("train").join("model.json")), "--plan", s(&plan), "--n", "640"], "generate");
    run(
        &[
            "evaluate",
            "--real",
            s(&train),
            "--metadata",
            s(&meta),
            "--synth",
            s(&step("generate").join("synthetic.csv")),
            "--holdout",
            s(&step("split").join("holdout.csv")),
            "--graph",
            s(&validated),
        ],
        "evaluate",
    );

    for file in [
        "fixture/data.csv",
        "split/train.csv",
        "propose/candidate.json",
        "validate/validated.json",
        "compress/plan.json",
        "train/model.json",
        "generate/synthetic.csv",
        "evaluate/eval_report.json",
    ] {
        let a = fs::read(pipe.join(file)).unwrap();
        let b = fs::read(dir.path().join("steps").join(file)).unwrap();
        assert!(a == b, "{file} differs between pipeline and hand-run stages");
    }
    let manifest = json(pipe.join("manifest.json"));
    assert!(manifest["artifacts"].as_object().unwrap().keys().any(|k| k.ends_with("synthetic.csv")));
}

#[test]
fn noisy_ensemble_recovers_the_truth_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("noisy.toml");
    fs::write(
        &config,
        r#"
seed = 4
[fixture]
recipe = "mini-retail"
n_rows = 3000

[[ensemble.providers]]
id = "perfect"
type = "stub-perfect"
params = { truth = "truth.json" }

[[ensemble.providers]]
id = "noisy-a"
type = "stub-noisy"
params = { truth = "truth.json", p = 0.2, seed = 1 }

[[ensemble.providers]]
id = "noisy-b"
type = "stub-noisy"
params = { truth = "truth.json", p = 0.2, seed = 2 }
"#,
    )
    .unwrap();
    let cfg = s(&config);
    let fx = dir.path().join("fx");
    ok(&["fixture", "--config", cfg, "--out", s(&fx)]);
    let (data, meta) = (fx.join("data.csv"), fx.join("metadata.json"));
    let prop = dir.path().join("prop");
    ok(&["propose", "--config", cfg, "--data", s(&data), "--metadata", s(&meta), "--provider-base", s(&fx), "--out", s(&prop)]);
    assert_eq!(fs::read_dir(prop.join("transcripts")).unwrap().count() >= 3, true);
    let ensemble = json(prop.join("ensemble.json"));
    assert_eq!(ensemble["threshold"].as_u64(), Some(2));
    let val = dir.path().join("val");
    ok(&[
        "validate",
        "--config",
        cfg,
        "--data",
        s(&data),
        "--metadata",
        s(&meta),
        "--graph",
        s(&prop.join("candidate.json")),
        "--truth",
        s(&fx.join("truth.json")),
        "--out",
        s(&val),
    ]);
    let discovery = json(val.join("discovery.json"));
    assert!(discovery["f1"].as_f64().unwrap() >= 0.95, "{discovery}");
    assert!(discovery["precision"].as_f64().unwrap() >= 0.95, "{discovery}");
}
