mod common;

use std::path::Path;
use std::process::{Command, Output};

use hdys::model::Model;

const TINY: &[&str] = &[
    "model.d=16",
    "model.set_width=8",
    "model.set_layers=1",
    "model.mlp_hidden=32,16",
    "model.temporal_layers=1",
    "model.temporal_heads=2",
    "model.head_small=16",
    "model.head_large=16",
    "model.dyn_hidden=16",
    "model.composer_hidden=16",
    "train.quota=2",
    "train.frames_per_batch=160",
    "train.epochs=2",
    "rollout.start_stride=30",
];

fn hdysctl(args: &[&str], extra: &[String]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdysctl"))
        .args(args)
        .args(extra)
        .env_remove("HDYS_DATA_DIR")
        .output()
        .unwrap()
}

fn sets(root: &Path) -> Vec<String> {
    let mut v = vec!["--set".to_string(), format!("data.root={}", root.display())];
    for s in TINY {
        v.push("--set".into());
        v.push(s.to_string());
    }
    v
}

fn tiny_corpus(dir: &Path) -> std::path::PathBuf {
    let mpath = dir.join("tiny.json");
    common::tiny_manifest(0, 2, 1).save(&mpath).unwrap();
    let root = dir.join("data");
    let out = hdysctl(&["gen-data", "--manifest", mpath.to_str().unwrap(), "--out", root.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    root
}

#[test]
fn usage_errors_exit_two() {
    let out = hdysctl(&["train", "--out", "/tmp/never", "--set", "model.nonsense=1"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.nonsense"));
    assert_eq!(hdysctl(&["frobnicate"], &[]).status.code(), Some(2));
    assert_eq!(hdysctl(&["--help"], &[]).status.code(), Some(0));
}

#[test]
fn missing_dataset_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("absent");
    let out = hdysctl(&["train", "--out", dir.path().to_str().unwrap()], &sets(&root));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gen-data"));
}

#[test]
fn validate_train_eval_flow() {
    let dir = tempfile::tempdir().unwrap();
    let root = tiny_corpus(dir.path());
    let out = hdysctl(&["validate"], &sets(&root));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.contains("train")).count(), 5);

    let run = dir.path().join("zero");
    let mut args = sets(&root);
    args.extend(["--set".into(), "train.epochs=0".into()]);
    let out = hdysctl(&["train", "--seed", "3", "--out", run.to_str().unwrap()], &args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trained = Model::load(&run.join("model.ckpt")).unwrap();
    assert_eq!(trained.cfg.train.seed, 3);
    let ds = hdys::datahub::read_dataset(&root).unwrap();
    let init = Model::initialize(&trained.cfg, &ds).unwrap();
    assert_eq!(std::fs::read(run.join("model.ckpt")).unwrap(), init.checkpoint().encode());
    for f in ["loss.csv", "config.txt", "provenance.json", "model.json"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let ev = dir.path().join("eval");
    let ckpt = run.join("model.ckpt");
    let out = hdysctl(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--out", ev.to_str().unwrap()], &sets(&root));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(ev.join("eval.csv")).unwrap();
    assert!(csv.starts_with("profile,representation,metric,value\n"));
    assert!(csv.contains("A,zero,mpje,"));
    let bad = hdysctl(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--split", "dev", "--out", ev.to_str().unwrap()], &sets(&root));
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn reproduce_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let root = tiny_corpus(dir.path());
    for (study, files) in [("table2-analogue", ["table2.csv", "loss.csv"]), ("rollout-table", ["rollout.csv", "loss.csv"])] {
        let mut bundles = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("{study}-{rep}"));
            let o = hdysctl(&["reproduce", study, "--seed", "1", "--out", out.to_str().unwrap()], &sets(&root));
            assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
            let mut files_bytes: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect();
            files_bytes.push(std::fs::read(out.join("model.ckpt")).unwrap());
            files_bytes.push(std::fs::read(out.join("provenance.json")).unwrap());
            bundles.push(files_bytes);
        }
        assert_eq!(bundles[0], bundles[1], "{study}");
    }
}
