use std::path::Path;
use std::process::{Command, Output};

use kwsbias::sweep::{write_results, ExperimentRecord, Stage};
use rand::{Rng, SeedableRng};

fn kwsbias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kwsbias")).args(args).env_remove("KWSBIAS_OUT").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = kwsbias(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = r#"
seed = 4

[features]
sample_rate = 8000
num_mel_banks = 20
num_mfcc = 10
frame_length_ms = 40
frame_step_pct = 60

[train]
epochs = 2
batch_size = 16
learning_rate_grid = [0.01]

[prune]
epochs = 1
batch_size = 16
final_sparsity = 0.5
frequency = 2
pruning_learning_rate = 0.001

[data]
split_strategy = "per_keyword_group"
ratios = { train = 0.5, validation = 0.25, test = 0.25 }

[synth]
speakers_per_gender = 4
utterances_per_speaker = 2

[sweep]
parallelism = 2

[sweep.grid]
sample_rates = [8000]
architectures = ["cnn"]
num_mel_banks = [20]
num_mfcc = [10, "none"]
frame_lengths_ms = [40]
frame_steps_pct = [60]
windows = ["hamming"]
final_sparsities = [0.5]
pruning_frequencies = [2]
pruning_schedules = ["polynomial_decay"]
pruning_learning_rates = [0.001]

[sweep.baselines]
criteria = ["high_accuracy"]
m = 1
"#;

#[test]
fn synth_writes_manifest_wavs_and_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    ok(&["synth", "--classes", "4", "--seed", "7", "--out", s(&d)]);
    let manifest = std::fs::read_to_string(d.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 1 + 4 * 8 * 5);
    assert_eq!(std::fs::read_dir(d.join("wav")).unwrap().count(), 4 * 8 * 5);
    let snap = std::fs::read_to_string(d.join("config.resolved.toml")).unwrap();
    assert!(snap.contains("seed = 7"));
}

#[test]
fn presets_expand_to_expected_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&["sweep", "--preset", "table9", "--plan-only", "--out", s(tmp.path())]);
    assert!(out.starts_with(&format!("{} training experiments", 48 * 2 * 2)), "{out}");
    let one = ok(&[
        "sweep",
        "--preset",
        "table9",
        "--plan-only",
        "--set",
        "sweep.grid.sample_rates=[16000]",
        "--set",
        "sweep.grid.architectures=[\"cnn\"]",
        "--out",
        s(tmp.path()),
    ]);
    assert!(one.starts_with("48 training experiments"), "{one}");
    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("plan.json")).unwrap()).unwrap();
    assert_eq!(plan.as_array().unwrap().len(), 48);
    let full = ok(&["sweep", "--preset", "table1", "--plan-only", "--out", s(tmp.path())]);
    assert!(full.starts_with("3456 training experiments, 72 pruning runs per baseline"), "{full}");
}

#[test]
fn exit_codes_and_error_lines() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["train", "--set", "train.epochs=0"],
        vec!["train", "--set", "nonsense.key=1"],
        vec!["sweep", "--preset", "table9", "--plan-only", "--set", "sweep.grid.num_mel_banks=[40]"],
    ] {
        let mut a = args.clone();
        a.extend(["--out", s(tmp.path())]);
        let out = kwsbias(&a);
        assert_eq!(out.status.code(), Some(2), "{a:?}");
        let line: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
        assert!(line["error"].is_string() && line["message"].is_string());
    }
    let out = kwsbias(&["evaluate", "--dataset", "/nonexistent/m.csv", "--model", "/nonexistent/x.ckpt", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    let line: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(line["error"], "io");
}

#[test]
fn select_matches_exhaustive_scan() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for trial in 0..20 {
        let n = rng.random_range(1..30);
        let rows: Vec<ExperimentRecord> = (0..n)
            .map(|i| ExperimentRecord {
                stage: Stage::Train,
                index: i,
                experiment_id: format!("t{i:05}"),
                status: "ok".into(),
                // coarse values force ties
                overall_mcc: Some(f64::from(rng.random_range(80..100u32)) / 100.0),
                reliability_bias: Some(f64::from(rng.random_range(0..10u32)) / 20.0),
                ..Default::default()
            })
            .collect();
        let results = tmp.path().join(format!("r{trial}.csv"));
        write_results(&results, &rows).unwrap();
        let out = ok(&[
            "select",
            s(&results),
            "--criterion",
            "low_bias_high_accuracy",
            "--tolerance",
            "0.015",
            "--out",
            s(&tmp.path().join("sel")),
        ]);
        let chosen = out.lines().nth(1).unwrap().split(',').nth(1).unwrap().to_string();

        let best = rows.iter().map(|r| r.overall_mcc.unwrap()).fold(f64::MIN, f64::max);
        let qual: Vec<&ExperimentRecord> =
            rows.iter().filter(|r| r.overall_mcc.unwrap() >= 0.985 * best).collect();
        let min_bias = qual.iter().map(|r| r.reliability_bias.unwrap()).fold(f64::MAX, f64::min);
        let pick = qual
            .iter()
            .filter(|r| r.reliability_bias.unwrap() == min_bias)
            .fold(None::<&&ExperimentRecord>, |acc, r| match acc {
                Some(a) if a.overall_mcc >= r.overall_mcc => Some(a),
                _ => Some(r),
            })
            .unwrap();
        assert_eq!(chosen, pick.experiment_id, "trial {trial}");
    }
}

#[test]
fn end_to_end_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let c = s(&cfg);
    let data = tmp.path().join("data");
    ok(&["synth", "--config", c, "--out", s(&data)]);
    let manifest = data.join("manifest.csv");
    let m = s(&manifest);
    let before = std::fs::read(&manifest).unwrap();

    let feat = tmp.path().join("feat");
    ok(&["featurize", "--config", c, "--dataset", m, "--out", s(&feat)]);
    let lines = std::fs::read_to_string(feat.join("features.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 4 * 8 * 2);

    let tr = tmp.path().join("train");
    let out = ok(&["train", "--config", c, "--dataset", m, "--out", s(&tr)]);
    assert!(out.contains("test MCC"));
    for f in ["model.ckpt", "report.json", "train_history.json", "config.resolved.toml"] {
        assert!(tr.join(f).exists(), "{f}");
    }

    let pr = tmp.path().join("prune");
    ok(&["prune", "--config", c, "--dataset", m, "--baseline", s(&tr.join("model.ckpt")), "--out", s(&pr)]);
    let sp: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(pr.join("pruned.sparsity.json")).unwrap()).unwrap();
    assert!((sp["overall"].as_f64().unwrap() - 0.5).abs() < 0.01);

    let ev = tmp.path().join("eval");
    ok(&["evaluate", "--config", c, "--dataset", m, "--model", s(&tr.join("model.ckpt")), "--out", s(&ev)]);
    let a: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ev.join("report.json")).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tr.join("report.json")).unwrap()).unwrap();
    assert_eq!(a["confusion"], b["confusion"]);

    let sw = tmp.path().join("sweep");
    ok(&["sweep", "--config", c, "--dataset", m, "--out", s(&sw)]);
    let results = std::fs::read_to_string(sw.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2 + 1);

    // the snapshot alone reproduces the sweep
    let again = tmp.path().join("again");
    ok(&["sweep", "--config", s(&sw.join("config.resolved.toml")), "--dataset", m, "--out", s(&again)]);
    assert_eq!(results, std::fs::read_to_string(again.join("results.csv")).unwrap());

    let sm = tmp.path().join("summary");
    ok(&["summarize", s(&sw.join("results.csv")), "--out", s(&sm)]);
    let summary = std::fs::read_to_string(sm.join("summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("num_mfcc,none,1,")), "{summary}");

    assert_eq!(before, std::fs::read(&manifest).unwrap(), "inputs must not change");
}
