use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_moodlyrics"));
    c.env_remove("MOODLYRICS_OUT").env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synthetic(dir: &Path) -> PathBuf {
    let out = dir.join("ingest");
    let o = run(&["--out", s(&out), "ingest", "--synthetic", "seed=1,per_class=8"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("corpus.csv")
}

#[test]
fn ingest_writes_artifacts_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthetic(dir.path());
    let out = corpus.parent().unwrap();
    for f in ["corpus.csv", "drops.log", "distribution.svg", "distribution.csv", "stats.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let m = manifest(out);
    assert_eq!(m["command"], "ingest");
    assert_eq!(m["metrics"]["records"], 32);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 5);
}

#[test]
fn ingest_reports_dropped_rows() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    std::fs::write(&input, "title,category,lyrics,mood\na,x,আমি গান,sad\nb,x,!!!,happy\nc,x,মন,angry\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&["--out", s(&out), "ingest", "--input", s(&input)]);
    assert!(o.status.success());
    assert_eq!(manifest(&out)["metrics"]["dropped"], 2);
    let log = std::fs::read_to_string(out.join("drops.log")).unwrap();
    assert_eq!(log.lines().filter(|l| l.starts_with("dropped row=")).count(), 2, "{log}");
    assert_eq!(manifest(&out)["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn user_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "name,lyrics,mood\nx,y,sad\n").unwrap();
    let out = dir.path().join("o");
    let o = run(&["--out", s(&out), "ingest", "--input", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("header"));
    assert!(!out.join("manifest.json").exists());

    assert_eq!(run(&["ingest"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--input", "x.csv", "--model", "svm"]).status.code(), Some(2));
    assert_eq!(run(&["--out", s(&out), "ingest", "--input", "/does/not/exist.csv"]).status.code(), Some(2));
    assert_eq!(run(&["--out", s(&out), "ingest", "--synthetic", "colour=blue"]).status.code(), Some(2));

    let corpus = synthetic(dir.path());
    let o = run(&["--out", s(&out), "train", "--input", s(&corpus), "--model", "bert", "--set", "bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["--out", s(&out), "train", "--input", s(&corpus), "--model", "bert", "--set", "hidden_size=30", "--set", "num_heads=4"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn out_dir_from_environment_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let env_out = dir.path().join("env");
    let o = bin()
        .args(["ingest", "--synthetic", "per_class=2"])
        .env("MOODLYRICS_OUT", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(env_out.join("manifest.json").is_file());

    let flag_out = dir.path().join("flag");
    let o = bin()
        .args(["--out", s(&flag_out), "ingest", "--synthetic", "per_class=2"])
        .env("MOODLYRICS_OUT", dir.path().join("ignored"))
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(flag_out.join("manifest.json").is_file());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn analyze_writes_frequency_and_density() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthetic(dir.path());
    let stop = dir.path().join("stop.txt");
    std::fs::write(&stop, "আমি\nতুমি\n").unwrap();
    let out = dir.path().join("an");
    let o = run(&["--out", s(&out), "analyze", "--input", s(&corpus), "--stopwords", s(&stop), "--bin-width", "10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let freq = std::fs::read_to_string(out.join("freq.csv")).unwrap();
    assert!(freq.starts_with("word,count\n"));
    let lexical = std::fs::read_to_string(out.join("lexical.csv")).unwrap();
    assert_eq!(lexical.lines().count(), 33);
    for f in ["density.svg", "density.csv", "stats.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert_eq!(manifest(&out)["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn naive_bayes_train_eval_predict() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthetic(dir.path());
    let out = dir.path().join("nb");
    let o = run(&["--out", s(&out), "train", "--input", s(&corpus), "--model", "nb"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["metrics"]["test_accuracy"], 1.0);
    assert_eq!(m["metrics"]["split_sizes"], serde_json::json!([24, 4, 4]));

    let ev = dir.path().join("ev");
    let model = out.join("nb_model.txt");
    let o = run(&["--out", s(&ev), "eval", "--checkpoint", s(&model), "--input", s(&out.join("test.csv"))]);
    assert!(o.status.success());
    assert_eq!(manifest(&ev)["metrics"]["accuracy"], 1.0);
    assert!(ev.join("confusion.svg").is_file());

    let o = run(&["predict", "--checkpoint", s(&model), "--lyrics", "কিছু"]);
    assert!(o.status.success());
    let line = String::from_utf8(o.stdout).unwrap();
    let (mood, probs) = line.trim().strip_prefix("mood=").unwrap().split_once(" p=").unwrap();
    assert!(["happy", "sad", "romantic", "relaxed"].contains(&mood));
    let p: Vec<f64> = probs.split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(p.len(), 4);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-5);
}

#[test]
fn encoder_train_then_eval_matches_and_checks_vocab() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthetic(dir.path());
    let out = dir.path().join("bert");
    let o = run(&["--out", s(&out), "train", "--input", s(&corpus), "--model", "bert", "--set", "epochs=3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4);
    assert_eq!(m["seeds"]["master"], 42);

    let ckpt = out.join("model.ckpt");
    let ev = dir.path().join("ev");
    let o = run(&["--out", s(&ev), "eval", "--checkpoint", s(&ckpt), "--input", s(&out.join("test.csv"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&ev)["metrics"]["accuracy"], m["metrics"]["test_accuracy"]);

    let val = dir.path().join("val");
    let o = run(&["--out", s(&val), "eval", "--checkpoint", s(&ckpt), "--input", s(&out.join("val.csv"))]);
    assert!(o.status.success());
    assert_eq!(manifest(&val)["metrics"]["accuracy"], m["metrics"]["best_val_accuracy"]);

    // A vocabulary from a different training set.
    let other = dir.path().join("other");
    let o = run(&["--seed", "7", "--out", s(&other), "train", "--input", s(&corpus), "--model", "bert", "--set", "epochs=1"]);
    assert!(o.status.success());
    let wrong = other.join("vocab.txt");
    assert_ne!(std::fs::read(&wrong).unwrap(), std::fs::read(out.join("vocab.txt")).unwrap());
    let o = run(&["--out", s(&ev), "eval", "--checkpoint", s(&ckpt), "--vocab", s(&wrong), "--input", s(&corpus)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not match"));

    let o = run(&["predict", "--checkpoint", s(&ckpt), "--lyrics", "   "]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty"));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("mood="));

    let text = dir.path().join("song.txt");
    std::fs::write(&text, "আনন্দ আমার তোমার মজা").unwrap();
    let o = run(&["predict", "--checkpoint", s(&ckpt), "--file", s(&text)]);
    assert!(o.status.success());
}

#[test]
fn corrupt_checkpoint_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthetic(dir.path());
    let ckpt = dir.path().join("junk.ckpt");
    std::fs::write(&ckpt, b"MOODCKPT\x01garbage").unwrap();
    let o = run(&["--out", s(&dir.path().join("e")), "eval", "--checkpoint", s(&ckpt), "--input", s(&corpus)]);
    assert_eq!(o.status.code(), Some(2));
}
