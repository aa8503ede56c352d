mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use sslse::cli::dispatch;


fn run(args: &[&str]) -> i32 {
    dispatch(std::iter::once("sslse").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn setup() -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, common::TINY_RUN_CONFIG).unwrap();
    let corpus = dir.path().join("corpus");
    assert_eq!(run(&["synth", "--config", p(&cfg), "--out", p(&corpus)]), 0);
    (dir, cfg, corpus)
}

fn listing(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.clone(), std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn bogus_composition_exits_with_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_sslse"))
        .args(["train", "--composition", "bogus", "--out", "x"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus") && err.contains("Usage"), "{err}");
    assert!(!Path::new("x").exists());
}

#[test]
fn help_and_usage_codes() {
    let out = Command::new(env!("CARGO_BIN_EXE_sslse")).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["prepare", "synth", "embed", "train", "enhance", "analyze-cn", "evaluate", "gradcheck", "repro-table"] {
        assert!(text.contains(sub), "missing {sub}");
    }
    assert_eq!(run(&["no-such-command"]), 2);
    assert_eq!(run(&["train", "--policy", "half", "--out", "x"]), 2);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"train": {"learning_rate": 0.1}}"#).unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(&["train", "--config", p(&cfg), "--corpus", p(dir.path()), "--out", p(&out)]), 1);
}

#[test]
fn missing_inputs_are_domain_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("nothing");
    assert_eq!(run(&["train", "--corpus", p(&empty), "--out", p(&dir.path().join("o"))]), 1);
    assert_eq!(run(&["train", "--out", p(&dir.path().join("o"))]), 1);
}

#[test]
fn train_writes_run_directory_with_materialized_config() {
    let (dir, cfg, corpus) = setup();
    let before = listing(&corpus);
    let out = dir.path().join("runs/a");
    let code = run(&[
        "train", "--config", p(&cfg), "--corpus", p(&corpus), "--composition", "ws+log1p", "--policy", "pf", "--out", p(&out),
    ]);
    assert_eq!(code, 0);
    for f in ["model/model.senp", "model/model.json", "weights.json", "loss.csv", "split.json", "summary.json", "manifest.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let train = &manifest["config"]["train"];
    assert_eq!(train["composition"], "ws+log1p");
    assert_eq!(train["policy"], "pf");
    assert_eq!(train["seed"], 1);
    assert_eq!(train["lr"], 1e-4);
    assert_eq!(manifest["config"]["metrics"]["retention"], 0.95);
    assert_eq!(manifest["command"], "train");
    assert!(manifest["timings_secs"].as_object().unwrap().contains_key(&format!("train:{}", p(&out))));
    let loss = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    assert!(loss.starts_with("step,split,loss\n0,val,"));
    assert_eq!(listing(&corpus), before);
}

#[test]
fn train_and_analyze_cn_are_byte_reproducible() {
    let (dir, cfg, corpus) = setup();
    let emb = dir.path().join("emb");
    assert_eq!(run(&["embed", "--config", p(&cfg), "--corpus", p(&corpus), "--out", p(&emb)]), 0);
    let once = |tag: &str| {
        let out = dir.path().join(tag);
        assert_eq!(run(&["train", "--config", p(&cfg), "--corpus", p(&corpus), "--composition", "ws", "--out", p(&out)]), 0);
        let cn = out.join("cn.csv");
        let code = run(&[
            "analyze-cn",
            "--clean-emb",
            p(&emb.join("clean")),
            "--noisy-emb",
            p(&emb.join("noisy")),
            "--weights",
            p(&out.join("weights.json")),
            "--drop-last",
            "2",
            "--samples",
            "5",
            "--out",
            p(&cn),
        ]);
        assert_eq!(code, 0);
        ["loss.csv", "weights.json", "cn.csv", "cn.json", "model/model.senp"]
            .map(|f| std::fs::read(out.join(f)).unwrap())
    };
    let (a, b) = (once("r1"), once("r2"));
    assert_eq!(a, b);
    let summary: serde_json::Value = serde_json::from_slice(&a[3]).unwrap();
    assert!(summary["pearson"].as_f64().unwrap().is_finite());
    assert_eq!(summary["drop_last"], 2);
    assert_eq!(summary["n_samples"], 5);
    let csv = String::from_utf8(a[2].clone()).unwrap();
    assert!(csv.starts_with("layer,raw_distance,normalized_distance,weight\n"));
    assert_eq!(csv.lines().count(), 1 + 5);
}

#[test]
fn enhance_then_evaluate() {
    let (dir, cfg, corpus) = setup();
    let model = dir.path().join("m");
    assert_eq!(run(&["train", "--config", p(&cfg), "--corpus", p(&corpus), "--out", p(&model)]), 0);
    let enh = dir.path().join("enh");
    assert_eq!(run(&["enhance", "--model", p(&model.join("model")), "--input", p(&corpus), "--out", p(&enh)]), 0);
    let tiled = dir.path().join("enh_tiled");
    let code = run(&[
        "enhance", "--model", p(&model.join("model")), "--input", p(&corpus.join("noisy/utt0000.wav")), "--window-samples", "1600",
        "--out", p(&tiled),
    ]);
    assert_eq!(code, 0);
    assert!(tiled.join("utt0000.wav").exists());
    let ev = dir.path().join("ev");
    let code = run(&[
        "evaluate", "--clean", p(&corpus.join("clean")), "--degraded", p(&enh), "--pesq-command", "echo 2.5", "--out", p(&ev),
    ]);
    assert_eq!(code, 0);
    let scores = std::fs::read_to_string(ev.join("scores.csv")).unwrap();
    assert!(scores.starts_with("utterance,stoi,segsnr,llr,wss,pesq,csig,cbak,covl\n"));
    assert_eq!(scores.lines().count(), 1 + 8);
    let means: serde_json::Value = serde_json::from_slice(&std::fs::read(ev.join("means.json")).unwrap()).unwrap();
    assert_eq!(means["pesq"], 2.5);
}

#[test]
fn embed_passthrough_validates_files() {
    let (dir, cfg, corpus) = setup();
    let emb = dir.path().join("emb");
    assert_eq!(run(&["embed", "--config", p(&cfg), "--corpus", p(&corpus), "--out", p(&emb)]), 0);
    let copy = dir.path().join("copy");
    assert_eq!(run(&["embed", "--passthrough", p(&emb.join("noisy")), "--out", p(&copy)]), 0);
    assert_eq!(
        std::fs::read(emb.join("noisy/utt0003.ssle")).unwrap(),
        std::fs::read(copy.join("utt0003.ssle")).unwrap()
    );
    std::fs::write(emb.join("noisy/utt0003.ssle"), b"XXXXjunk").unwrap();
    assert_eq!(run(&["embed", "--passthrough", p(&emb.join("noisy")), "--out", p(&dir.path().join("c2"))]), 1);
}

#[test]
fn prepare_resamples_and_gradcheck_reports() {
    let (dir, _cfg, corpus) = setup();
    let prepared = dir.path().join("prep");
    assert_eq!(run(&["prepare", "--corpus", p(&corpus), "--out", p(&prepared)]), 0);
    assert_eq!(listing(&prepared.join("clean")).len(), 8);
    let gc = dir.path().join("gc");
    assert_eq!(run(&["gradcheck", "--seeds", "2", "--out", p(&gc)]), 0);
    let csv = std::fs::read_to_string(gc.join("gradcheck.csv")).unwrap();
    assert!(csv.starts_with("case,seeds,worst_rel_error,passed\n"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
}
