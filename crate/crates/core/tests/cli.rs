use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use emofuse::data::DatasetManifest;

fn emofuse(args: &[&str], extra: &[&Path]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_emofuse"));
    cmd.args(args);
    for p in extra {
        cmd.arg(p);
    }
    cmd.output().unwrap()
}

fn stdout_path(out: &Output) -> PathBuf {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8(out.stdout.clone()).unwrap().trim())
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["synth", "--per-class", "12", "--steps", "3", "--seed", "5"];
    args.extend(extra);
    args.push("--out");
    stdout_path(&emofuse(&args, &[dir]))
}

/// A small but complete run configuration next to `manifest`.
fn write_config(dir: &Path, manifest: &Path, extra: Value) -> PathBuf {
    let mut cfg = serde_json::json!({
        "manifest": manifest,
        "folds": 2,
        "model": {"d_model": 8, "heads": 2, "d_k": 8, "d_v": 4, "conv_filters": 4, "hidden": 8},
        "train": {"max_epochs": 20, "learning_rate": 0.01},
        "preprocess": {"pca_dim": 4}
    });
    if let (Value::Object(base), Value::Object(more)) = (&mut cfg, extra) {
        base.extend(more);
    }
    let path = dir.join("run.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn run_train(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_emofuse"));
    cmd.arg("train").arg("--config").arg(config).arg("--out").arg(out).args(extra);
    cmd.output().unwrap()
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn error_of(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    let line = text.lines().last().unwrap();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("stderr is not one JSON line: {text}"))
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn key_paths(v: &Value, prefix: &str, out: &mut BTreeSet<String>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let p = format!("{prefix}.{k}");
                out.insert(p.clone());
                key_paths(child, &p, out);
            }
        }
        Value::Array(items) => {
            if let Some(first) = items.first() {
                key_paths(first, &format!("{prefix}[]"), out);
            }
        }
        _ => {}
    }
}

#[test]
fn synth_is_byte_identical_for_the_same_seed() {
    let tmp = tempfile::tempdir().unwrap();
    synth(&tmp.path().join("a"), &[]);
    synth(&tmp.path().join("b"), &[]);
    let a = files_under(&tmp.path().join("a"));
    assert!(a.len() > 48);
    assert_eq!(a, files_under(&tmp.path().join("b")));
}

#[test]
fn synth_imbalanced_counts_follow_the_request() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = stdout_path(&emofuse(
        &["synth", "--imbalanced", "1451,2723,1761,2275", "--steps", "1", "--eye-dim", "2", "--ppg-dim", "2", "--semantic-dim", "2", "--out"],
        &[tmp.path()],
    ));
    let m: DatasetManifest = serde_json::from_str(&fs::read_to_string(manifest).unwrap()).unwrap();
    let mut counts = [0usize; 4];
    m.samples.iter().for_each(|s| counts[s.label] += 1);
    assert_eq!(counts, [1451, 2723, 1761, 2275]);
}

#[test]
fn train_writes_every_fold_and_eval_reproduces_it() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(&tmp.path().join("data"), &[]);
    let config = write_config(tmp.path(), &manifest, Value::Null);
    let run = stdout_path(&run_train(&config, &tmp.path().join("runs"), &[]));
    assert!(run.file_name().unwrap().to_str().unwrap().starts_with("train-"));

    let summary = read(&run.join("summary.json"));
    assert_eq!(summary["folds"].as_array().unwrap().len(), 2);
    for f in 0..2 {
        for file in ["artifacts.json", "model.json", "preprocess.json", "pca.json", "record.json", "report.json", "roc_test.csv"] {
            assert!(run.join(format!("fold-{f}")).join(file).is_file(), "fold-{f}/{file}");
        }
    }

    // evaluate fold 0 on exactly its own training samples
    let split = read(&run.join("split.json"));
    let fold_train: BTreeSet<&str> = split["folds"][0]["train"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let mut m: DatasetManifest = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    m.samples.retain(|s| fold_train.contains(s.id.as_str()));
    let sub = manifest.with_file_name("fold0-train.json");
    fs::write(&sub, serde_json::to_string(&m).unwrap()).unwrap();

    let fold_dir = run.join("fold-0");
    let out = emofuse(&["eval", "--params"], &[&fold_dir]);
    assert!(!out.status.success(), "eval without --manifest must fail");
    let report_path = tmp.path().join("eval.json");
    let out = Command::new(env!("CARGO_BIN_EXE_emofuse"))
        .arg("eval")
        .arg("--params")
        .arg(&fold_dir)
        .arg("--manifest")
        .arg(&sub)
        .arg("--out")
        .arg(&report_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eval = read(&report_path);
    let recorded = read(&fold_dir.join("report.json"));
    let train_acc = recorded["train"]["accuracy"].as_f64().unwrap();
    assert!(eval["accuracy"].as_f64().unwrap() >= train_acc - 1e-9);
    assert_eq!(eval["num_samples"].as_u64().unwrap() as usize, fold_train.len());

    // same schema as the training-time report
    let (mut a, mut b) = (BTreeSet::new(), BTreeSet::new());
    key_paths(&eval, "", &mut a);
    key_paths(&recorded["test"], "", &mut b);
    assert_eq!(a, b);

    // feature dump: one row per sample, id + label + 2·d_model columns
    let csv_path = tmp.path().join("features.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_emofuse"))
        .arg("dump-features")
        .arg("--params")
        .arg(&fold_dir)
        .arg("--manifest")
        .arg(&sub)
        .arg("--out")
        .arg(&csv_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), fold_train.len() + 1);
    assert!(lines.iter().all(|l| l.split(',').count() == 2 + 16));

    // a missing PCA file is named in the error
    fs::remove_file(fold_dir.join("pca.json")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_emofuse"))
        .arg("eval")
        .arg("--params")
        .arg(&fold_dir)
        .arg("--manifest")
        .arg(&sub)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = error_of(&out);
    assert_eq!(err["kind"], "missing_artifact");
    assert!(err["message"].as_str().unwrap().contains("pca.json"));
}

#[test]
fn identical_train_runs_give_identical_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(&tmp.path().join("data"), &[]);
    let config = write_config(tmp.path(), &manifest, serde_json::json!({"train": {"max_epochs": 3}}));
    let a = stdout_path(&run_train(&config, &tmp.path().join("one"), &[]));
    let b = stdout_path(&run_train(&config, &tmp.path().join("two"), &[]));
    assert_eq!(a.file_name(), b.file_name());
    assert_eq!(fs::read(a.join("summary.json")).unwrap(), fs::read(b.join("summary.json")).unwrap());
    let c = stdout_path(&run_train(&config, &tmp.path().join("one"), &["--seed", "8"]));
    assert_ne!(a, c, "a different seed is a different configuration");
}

#[test]
fn overrides_select_the_concatenation_row() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(&tmp.path().join("data"), &[]);
    let config = write_config(tmp.path(), &manifest, serde_json::json!({"train": {"max_epochs": 2}}));
    let run = stdout_path(&run_train(&config, &tmp.path().join("runs"), &["--override", "modalities=em,ppg,vsi", "ca=false"]));
    let summary = read(&run.join("summary.json"));
    assert_eq!(summary["architecture"], "em+ppg+vsi");
    let cfg = read(&run.join("config.json"));
    assert_eq!(cfg["ca"], false);
    assert_eq!(cfg["modalities"], serde_json::json!(["em", "ppg", "vsi"]));
}

#[test]
fn invalid_configs_fail_before_writing_anything() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(&tmp.path().join("data"), &[]);
    let config = write_config(tmp.path(), &manifest, Value::Null);
    let out_dir = tmp.path().join("runs");
    for bad in [
        vec!["--override", "folds=1"],
        vec!["--override", "model.heads=0"],
        vec!["--override", "nonsense=3"],
        vec!["--override", "manifest=missing.json"],
        vec!["--override", "modalities=[]"],
    ] {
        let out = run_train(&config, &out_dir, &bad);
        assert_eq!(out.status.code(), Some(1), "{bad:?}");
        assert_eq!(error_of(&out)["status"], "error");
        assert!(!out_dir.exists(), "{bad:?} left an output directory");
    }
    let out = emofuse(&["train", "--bogus-flag"], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_of(&out)["kind"], "usage");
}

#[test]
fn ablate_runs_rows_in_declared_order() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(&tmp.path().join("data"), &[]);
    let config = write_config(tmp.path(), &manifest, serde_json::json!({"train": {"max_epochs": 1}}));
    let out_dir = tmp.path().join("runs");

    let empty = Command::new(env!("CARGO_BIN_EXE_emofuse"))
        .arg("ablate")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .args(["--override", "ablation=[]"])
        .output()
        .unwrap();
    assert_eq!(empty.status.code(), Some(1));
    assert!(error_of(&empty)["message"].as_str().unwrap().contains("nothing to run"));
    assert!(!out_dir.exists());

    let out = Command::new(env!("CARGO_BIN_EXE_emofuse"))
        .arg("ablate")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    let dir = stdout_path(&out);
    let table = read(&dir.join("ablation.json"));
    let ids: Vec<&str> = table["rows"].as_array().unwrap().iter().map(|r| r["config_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["I", "II", "III", "IV", "V", "VI", "VII"]);
    let csv = fs::read_to_string(dir.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 8);
    assert_eq!(lines[0], "config_id,modalities,ca,acc_mean,acc_std,recall,f1,params");
}
