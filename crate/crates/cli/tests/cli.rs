use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::Value;

fn capgap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capgap"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = capgap(dir, args);
    assert!(out.status.success(), "capgap {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn smoke_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let start = Instant::now();
    ok(d, &["synth", "--kind", "fingerprint", "--n-images", "200", "--out", "fp"]);
    ok(d, &["split", "--corpus", "fp/corpus.jsonl", "--out", "split/split.json"]);
    ok(d, &["train", "--features", "tfidf", "--corpus", "fp/corpus.jsonl", "--split", "split/split.json", "--out", "model"]);
    let stdout = ok(d, &["eval", "--model", "model", "--test", "fp/corpus.jsonl", "--split", "split/split.json", "--out", "eval/metrics.json"]);
    assert!(stdout.contains("accuracy"), "{stdout}");
    ok(d, &["report", "--text", "eval/metrics.json", "--image", "eval/metrics.json", "--out", "report", "--format", "json,markdown"]);
    assert!(start.elapsed() < Duration::from_secs(60));

    let m = json(&d.join("eval/metrics.json"));
    assert!(m["overall_accuracy"].as_f64().unwrap() > 0.8);
    for dir in ["fp", "split", "model", "eval", "report"] {
        let manifest = json(&d.join(dir).join("run_manifest.json"));
        assert_eq!(manifest["seed"], 0);
        assert!(!manifest["outputs"].as_array().unwrap().is_empty(), "{dir}");
    }
    let report = std::fs::read_to_string(d.join("report/report.md")).unwrap();
    assert!(report.contains("gap"), "{report}");
}

#[test]
fn split_is_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--kind", "fingerprint", "--n-images", "50", "--out", "fp"]);
    let split = |out: &str, seed: &str| {
        ok(d, &["split", "--corpus", "fp/corpus.jsonl", "--seed", seed, "--out", out]);
        std::fs::read(d.join(out)).unwrap()
    };
    assert_eq!(split("a/split.json", "1"), split("b/split.json", "1"));
    assert_ne!(split("a/split.json", "1"), split("c/split.json", "2"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let code = |args: &[&str]| capgap(d, args).status.code();

    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["train", "--no-such-flag"]), Some(1));
    assert_eq!(code(&["--set", "learning_rat=0.1", "split", "--corpus", "x.jsonl", "--out", "s.json"]), Some(1));

    std::fs::write(d.join("bad.jsonl"), "{\"caption_id\": \"a\"}\n").unwrap();
    assert_eq!(code(&["split", "--corpus", "bad.jsonl", "--out", "s.json"]), Some(2));
    assert_eq!(code(&["split", "--corpus", "missing.jsonl", "--out", "s.json"]), Some(2));

    ok(d, &["synth", "--kind", "gaussian", "--n-per-class", "50", "--out", "g"]);
    ok(d, &["split", "--embeddings", "g/embeddings.jsonl", "--out", "gs/split.json"]);
    let diverge = [
        "--set",
        "learning_rate=1e300",
        "--set",
        "weight_decay=0",
        "train",
        "--features",
        "embedding",
        "--embeddings",
        "g/embeddings.jsonl",
        "--split",
        "gs/split.json",
        "--out",
        "m",
    ];
    assert_eq!(code(&diverge), Some(3));
}

#[test]
fn transform_refuses_to_overwrite_input() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--kind", "fingerprint", "--n-images", "10", "--out", "fp"]);
    let before = std::fs::read(d.join("fp/corpus.jsonl")).unwrap();
    let out = capgap(d, &["transform", "--kind", "shuffle-words", "--input", "fp/corpus.jsonl", "--out", "fp/corpus.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(std::fs::read(d.join("fp/corpus.jsonl")).unwrap(), before);
}
