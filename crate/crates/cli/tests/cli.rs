use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rali_core::dataset::{encode_packed, EmbeddingDataset};
use rali_core::scoring::load_model;
use sha2::{Digest, Sha256};

const SMALL: &[&str] = &[
    "--set", "pca.m=4",
    "--set", "kmeans.k=12",
    "--set", "kmeans.buckets=6",
    "--set", "align.epochs=2",
    "--set", "align.batch_size=64",
    "--set", "finetune.epochs=3",
];

fn rali(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rali"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RALI_DATA_DIR")
        .env("RALI_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = rali(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn sha(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

fn corpus(dir: &Path) {
    ok(
        &["gen-synth", "--n", "300", "--holdout", "100", "--dim", "8", "--seed", "3", "--out", "train.rqe", "--test-out", "test.rqe"],
        dir,
    );
}

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(SMALL);
    v
}

#[test]
fn gen_synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for name in ["a.rqe", "b.rqe"] {
        ok(&["gen-synth", "--n", "200", "--dim", "16", "--seed", "7", "--out", name], d);
    }
    assert_eq!(sha(&d.join("a.rqe")), sha(&d.join("b.rqe")));
    ok(&["gen-synth", "--n", "20", "--dim", "4", "--seed", "7", "--out", "c.jsonl"], d);
    let summary = ok(&["inspect", "c.jsonl"], d);
    assert!(summary.contains("\"format\":\"jsonl\"") && summary.contains("\"records\":20"));
}

#[test]
fn gen_synth_rejects_dim_one_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = rali(&["gen-synth", "--dim", "1", "--out", "x.rqe"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dimension") && err.contains("Usage: rali gen-synth"), "{err}");
    assert!(!dir.path().join("x.rqe").exists());
}

#[test]
fn default_corpus_feeds_align() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-synth", "--n", "64", "--out", "train.rqe"], d);
    let out = ok(&["align", "--train", "train.rqe", "--out", "adapter.rqa", "--set", "align.epochs=1", "--set", "align.batch_size=32"], d);
    assert!(out.contains("sha256"));
    assert!(ok(&["inspect", "adapter.rqa"], d).contains("\"format\":\"RQA1\""));
}

#[test]
fn pipeline_is_reproducible_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    let base = ["pipeline", "--train", "train.rqe", "--test", "test.rqe", "--seed", "5"];
    let mut a = base.to_vec();
    a.extend(["--out-dir", "run1"]);
    let mut b = base.to_vec();
    b.extend(["--out-dir", "run2"]);
    let report = ok(&with_small(&a), d);
    ok(&with_small(&b), d);
    assert!(report.contains("\"plcc\"") && report.contains("PLCC / SRCC"));
    for f in ["adapter.rqa", "pca.rqm", "init.rqm", "model.rqm"] {
        assert_eq!(sha(&d.join("run1").join(f)), sha(&d.join("run2").join(f)), "{f}");
    }

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("run1/manifest.json")).unwrap()).unwrap();
    let stages: Vec<&str> = manifest["stages"].as_array().unwrap().iter().map(|s| s["stage"].as_str().unwrap()).collect();
    assert_eq!(stages, ["align", "pca", "cluster", "finetune", "eval"]);
    assert_eq!(manifest["stages"][3]["outputs"]["model.rqm"], sha(&d.join("run1/model.rqm")));
    let train = EmbeddingDataset::clone(&rali_cli::commands::load_data(&d.join("train.rqe")).unwrap());
    assert_eq!(manifest["stages"][0]["inputs"]["train"], hex::encode(Sha256::digest(encode_packed(&train).unwrap())));
    assert_eq!(manifest["seed"], 5);

    // each stage on its own reproduces the pipeline artifacts
    ok(&with_small(&["align", "--train", "train.rqe", "--seed", "5", "--out", "s.rqa"]), d);
    ok(&with_small(&["pca", "--train", "train.rqe", "--adapter", "s.rqa", "--seed", "5", "--out", "s_pca.rqm"]), d);
    ok(&with_small(&["cluster", "--train", "train.rqe", "--model", "s_pca.rqm", "--seed", "5", "--out", "s_init.rqm"]), d);
    ok(&with_small(&["finetune", "--train", "train.rqe", "--model", "s_init.rqm", "--seed", "5", "--out", "s_model.rqm"]), d);
    assert_eq!(sha(&d.join("s.rqa")), sha(&d.join("run1/adapter.rqa")));
    assert_eq!(sha(&d.join("s_pca.rqm")), sha(&d.join("run1/pca.rqm")));
    assert_eq!(sha(&d.join("s_init.rqm")), sha(&d.join("run1/init.rqm")));
    assert_eq!(sha(&d.join("s_model.rqm")), sha(&d.join("run1/model.rqm")));

    let pca = load_model(d.join("s_pca.rqm")).unwrap();
    assert_eq!(pca.k(), 0);
    assert_eq!(pca.basis_dim(), 4);
}

#[test]
fn skip_align_matches_first_ablation_case() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    let report = ok(
        &with_small(&["pipeline", "--train", "train.rqe", "--test", "test.rqe", "--out-dir", "noalign", "--skip-align"]),
        d,
    );
    assert!(!d.join("noalign/adapter.rqa").exists());
    let ablate = ok(&with_small(&["ablate", "--train", "train.rqe", "--test", "test.rqe"]), d);
    let case1: serde_json::Value = serde_json::from_str(ablate.lines().next().unwrap()).unwrap();
    let pipeline: serde_json::Value = serde_json::from_str(report.lines().next().unwrap()).unwrap();
    assert_eq!(case1["case"], 1);
    assert_eq!(case1["report"]["plcc"], pipeline["plcc"]);
    assert_eq!(case1["report"]["srcc"], pipeline["srcc"]);
}

#[test]
fn ablate_emits_six_cases_and_sweep_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    let out = ok(
        &with_small(&["ablate", "--train", "train.rqe", "--test", "test.rqe", "--sweep-m", "2,4", "--sweep-k", "8,12"]),
        d,
    );
    let json_lines = out.lines().filter(|l| l.starts_with("{\"case\"")).count();
    assert_eq!(json_lines, 6);
    let header = out.lines().find(|l| l.contains("Case 1")).unwrap();
    for i in 1..=6 {
        assert!(header.contains(&format!("Case {i}")));
    }
    for row in ["Contrastive Alignment", "PCA Reduction", "Bucketed K-Means", "Seed Augmentation", "Scoring Definition", "PLCC", "SRCC"] {
        assert!(out.lines().any(|l| l.starts_with(row)), "missing {row}");
    }
    let sweep_rows = out
        .lines()
        .skip_while(|l| !l.contains("w/o scoring def"))
        .skip(1)
        .filter(|l| l.contains(" / "))
        .count();
    assert_eq!(sweep_rows, 4);
}

#[test]
fn score_contract() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    ok(&with_small(&["pipeline", "--train", "train.rqe", "--test", "test.rqe", "--out-dir", "run"]), d);

    let out = ok(&["score", "--model", "run/model.rqm", "--data", "test.rqe"], d);
    let lines: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 100);
    for l in &lines {
        let s = l["score"].as_f64().unwrap();
        assert!((1.0..=5.0).contains(&s));
        assert_eq!(l["top"].as_array().unwrap().len(), 5);
    }

    fs::write(d.join("empty.rqe"), encode_packed(&EmbeddingDataset::new(8, vec![]).unwrap()).unwrap()).unwrap();
    let out = rali(&["score", "--model", "run/model.rqm", "--data", "empty.rqe"], d);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());

    ok(&["gen-synth", "--n", "10", "--dim", "6", "--out", "wide.rqe"], d);
    let out = rali(&["score", "--model", "run/model.rqm", "--data", "wide.rqe"], d);
    assert_ne!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("expected 8, got 6"), "{err}");
}

#[test]
fn eval_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    ok(&with_small(&["pipeline", "--train", "train.rqe", "--test", "test.rqe", "--out-dir", "run"]), d);
    let out = ok(&["eval", "--model", "run/model.rqm", "--data", "test.rqe"], d);
    let report: serde_json::Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(report["n"], 100);
    assert!(out.contains("PLCC / SRCC"));
    let logistic = ok(&["eval", "--model", "run/model.rqm", "--data", "test.rqe", "--logistic"], d);
    assert!(logistic.contains("\"logistic\":true"));

    assert!(ok(&["inspect", "train.rqe"], d).contains("\"format\":\"RQE1\""));
    let m = ok(&["inspect", "run/model.rqm"], d);
    assert!(m.contains("\"format\":\"RQM1\"") && m.contains("\"k\":12"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = rali(&["inspect", "missing.rqe"], d);
    assert_eq!(out.status.code(), Some(4));

    let out = rali(&["gen-synth", "--out", "x.rqe", "--set", "pca.dims=3"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown config key"));

    fs::write(d.join("bad.conf"), "seed = 1\nbogus = 2\n").unwrap();
    let out = rali(&["--config", "bad.conf", "gen-synth", "--out", "x.rqe"], d);
    assert_eq!(out.status.code(), Some(2));

    fs::write(d.join("junk.rqm"), b"RQM1 not really").unwrap();
    let out = rali(&["inspect", "junk.rqm"], d);
    assert_eq!(out.status.code(), Some(2));

    // a constant-score basis gives constant predictions
    corpus(d);
    ok(&with_small(&["pipeline", "--train", "train.rqe", "--test", "test.rqe", "--out-dir", "run", "--skip-finetune"]), d);
    let mut model = load_model(d.join("run/model.rqm")).unwrap();
    model.basis.scores.iter_mut().for_each(|s| *s = 3.0);
    rali_core::scoring::save_model(&model, d.join("flat.rqm")).unwrap();
    let out = rali(&["eval", "--model", "flat.rqm", "--data", "test.rqe"], d);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_file_and_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    let work = tempfile::tempdir().unwrap();
    fs::write(
        work.path().join("run.conf"),
        "# small run\ntrain = train.rqe\ntest = test.rqe\nout_dir = out\npca.m = 4\nkmeans.k = 12\nkmeans.buckets = 6\nalign.epochs = 1\nalign.batch_size = 64\nfinetune.epochs = 1\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rali"))
        .args(["--config", "run.conf", "pipeline"])
        .current_dir(work.path())
        .env("RALI_DATA_DIR", d)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("out/model.rqm").exists());
}
