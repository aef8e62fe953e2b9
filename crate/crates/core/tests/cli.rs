//! End-to-end runs of the `gestprop` binary on a tiny synthetic corpus.

use std::path::Path;
use std::process::{Command, Output};

fn gestprop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gestprop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = gestprop(args);
    assert!(
        out.status.success(),
        "gestprop {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_corpus(dir: &Path) {
    let spec = dir.join("spec.json");
    std::fs::write(
        &spec,
        r#"{"speakers": 2, "duration_s": 30.0, "embedding_dim": 8}"#,
    )
    .unwrap();
    ok(&[
        "synth",
        "--spec",
        s(&spec),
        "--seed",
        "3",
        "--out",
        s(&dir.join("corpus")),
    ]);
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    tiny_corpus(dir.path());
    let corpus = dir.path().join("corpus");
    let manifest = corpus.join("manifest.json");
    let emb = corpus.join("embeddings.vec");
    let out = dir.path().join("run");
    let common = [
        "--manifest",
        s(&manifest),
        "--embeddings",
        s(&emb),
        "--out",
        s(&out),
        "--folds",
        "3",
        "--steps",
        "20",
    ];
    let with = |extra: &[&'static str]| -> Vec<String> {
        extra
            .iter()
            .map(|a| a.to_string())
            .chain(common.iter().map(|a| a.to_string()))
            .collect()
    };
    let run = |args: Vec<String>| ok(&args.iter().map(String::as_str).collect::<Vec<_>>());

    run(with(&["features"]));
    assert!(out.join("features/rec001.prosody.csv").is_file());

    let train = run(with(&[
        "train",
        "--property",
        "presence",
        "--property",
        "phase",
    ]));
    assert!(train.contains("presence: score"), "{train}");
    assert!(out.join("train/report.json").is_file());
    assert!(out.join("checkpoints/phase/fold_02.ckpt").is_file());

    run(with(&[
        "eval",
        "--property",
        "presence",
        "--property",
        "phase",
    ]));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("eval/report.json")).unwrap())
            .unwrap();
    assert!(report.to_string().contains("phase"));

    run(with(&["baselines", "--property", "presence"]));
    assert!(out.join("baselines/report.csv").is_file());

    let ckpt = out.join("checkpoints/phase/fold_00.ckpt");
    let presence = out.join("checkpoints/presence/fold_00.ckpt");
    let mut args = with(&["predict", "--property", "phase"]);
    args.extend([
        "--checkpoint".into(),
        s(&ckpt).into(),
        "--presence".into(),
        s(&presence).into(),
    ]);
    run(args);
    assert!(out.join("predictions/rec001_phase.csv").is_file());

    let index = std::fs::read_to_string(out.join("index.json")).unwrap();
    for cmd in ["features", "train", "eval", "baselines", "predict"] {
        assert!(index.contains(cmd), "index lacks {cmd}");
    }
}

#[test]
fn gradcheck_reports_and_passes() {
    let stdout = ok(&["gradcheck", "--seed", "1"]);
    assert!(stdout.contains("max relative gradient error"));
}

#[test]
fn bad_config_fails_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let out = gestprop(&[
        "train",
        "--manifest",
        s(&dir.path().join("missing.json")),
        "--out",
        s(&dir.path().join("run")),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing.json"), "{err}");
    assert!(!dir.path().join("run/checkpoints").exists());

    let out = gestprop(&["train", "--modality", "smell"]);
    assert!(!out.status.success());
}
