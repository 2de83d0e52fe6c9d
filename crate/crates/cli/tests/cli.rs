use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rcad_core::recurrent::{Checkpoint, Model};
use serde_json::Value;
use tempfile::TempDir;

fn rcad(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcad"))
        .current_dir(dir)
        .env_remove("RCAD_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = rcad(dir, args);
    assert!(
        out.status.success(),
        "rcad {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_of_failure(dir: &Path, args: &[&str]) -> String {
    let out = rcad(dir, args);
    assert!(!out.status.success(), "rcad {args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

/// The single run directory under `root` whose name starts with `command`.
fn run_dir(root: &Path, command: &str) -> PathBuf {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(&format!("{command}-")))
        .collect();
    assert_eq!(dirs.len(), 1, "expected one {command} run in {}", root.display());
    dirs.pop().unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&read(path)).unwrap()
}

fn generate(dir: &Path, out: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec!["--out", out, "generate"];
    args.extend_from_slice(extra);
    ok(dir, &args);
    run_dir(&dir.join(out), "generate").join("data.csv")
}

#[test]
fn generate_defaults_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let a = generate(tmp.path(), "a", &[]);
    let text = read(&a);
    // long format: one row per (sample, step)
    assert_eq!(text.lines().count(), 1 + 1000 * 10);
    assert!(text.starts_with("sample_id,t,f1,f2,f3,f4,f5,f6,label\n"));
    let manifest = json(&run_dir(&tmp.path().join("a"), "generate").join("manifest.json"));
    assert_eq!(manifest["seed"], 42);
    assert!(manifest["config_hash"].as_str().unwrap().len() == 64);

    let b = generate(tmp.path(), "b", &[]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn existing_run_needs_force() {
    let tmp = TempDir::new().unwrap();
    generate(tmp.path(), "runs", &["--samples", "20"]);
    let err = stderr_of_failure(tmp.path(), &["--out", "runs", "generate", "--samples", "20"]);
    assert!(err.contains("--force"), "{err}");
    ok(tmp.path(), &["--out", "runs", "--force", "generate", "--samples", "20"]);
}

#[test]
fn unknown_config_key_is_named() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("c.json"), r#"{"data": {"n_samples": 50, "noise_level": 2}}"#).unwrap();
    let err = stderr_of_failure(tmp.path(), &["--config", "c.json", "generate"]);
    assert!(err.contains("noise_level"), "{err}");
    std::fs::write(tmp.path().join("d.json"), r#"{"epochs": 3}"#).unwrap();
    let err = stderr_of_failure(tmp.path(), &["--config", "d.json", "generate"]);
    assert!(err.contains("epochs"), "{err}");
}

#[test]
fn seed_precedence_config_env_flag() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("c.json"), r#"{"data": {"n_samples": 20, "seed": 5}}"#).unwrap();
    let seed_of = |out: &str| json(&run_dir(&tmp.path().join(out), "generate").join("manifest.json"))["seed"].clone();

    ok(tmp.path(), &["--config", "c.json", "--out", "cfg", "generate"]);
    assert_eq!(seed_of("cfg"), 5);

    let out = Command::new(env!("CARGO_BIN_EXE_rcad"))
        .current_dir(tmp.path())
        .env("RCAD_SEED", "11")
        .args(["--config", "c.json", "--out", "env", "generate"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(seed_of("env"), 11);

    let out = Command::new(env!("CARGO_BIN_EXE_rcad"))
        .current_dir(tmp.path())
        .env("RCAD_SEED", "11")
        .args(["--config", "c.json", "--out", "flag", "generate", "--seed", "12"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(seed_of("flag"), 12);
    let replay = json(&run_dir(&tmp.path().join("flag"), "generate").join("config.json"));
    assert_eq!(replay["data"]["seed"], 12);
    assert_eq!(replay["data"]["n_samples"], 20);
}

#[test]
fn preprocess_counts_duplicates_and_zeroes_constant_columns() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("t.csv"), "a,b,k\n1,2,5\n1,2,5\n1,2,5\n3,4,5\n6,1,5\n").unwrap();
    ok(tmp.path(), &["--out", "r", "preprocess", "--input", "t.csv"]);
    let dir = run_dir(&tmp.path().join("r"), "preprocess");
    let report = json(&dir.join("clean_report.json"));
    assert_eq!(report["duplicates_removed"], 2);
    assert_eq!(report["output_rows"], 3);
    let scaler = json(&dir.join("scaler.json"));
    assert_eq!(scaler["spread"][2], 0.0);
    let cleaned = read(&dir.join("cleaned.csv"));
    assert!(cleaned.lines().skip(1).all(|l| l.ends_with(",0")), "{cleaned}");
}

#[test]
fn preprocess_clean_input_is_plain_standardization() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("t.csv"), "x,y\n1,10\n2,30\n4,20\n").unwrap();
    ok(tmp.path(), &["--out", "r", "preprocess", "--input", "t.csv"]);
    let dir = run_dir(&tmp.path().join("r"), "preprocess");
    let report = json(&dir.join("clean_report.json"));
    assert_eq!(report["duplicates_removed"], 0);
    assert_eq!(report["rows_dropped"], 0);
    assert_eq!(report["missing_imputed"], serde_json::json!([0, 0]));

    // independent z-score with the population spread
    let x = [1.0f64, 2.0, 4.0];
    let mean = x.iter().sum::<f64>() / 3.0;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
    let cleaned = read(&dir.join("cleaned.csv"));
    for (line, v) in cleaned.lines().skip(1).zip(x) {
        let got: f64 = line.split(',').next().unwrap().parse().unwrap();
        assert!((got - (v - mean) / sd).abs() < 1e-12);
    }
}

#[test]
fn features_writes_matrix_selection_and_outliers() {
    let tmp = TempDir::new().unwrap();
    let data = generate(tmp.path(), "g", &["--samples", "120"]);
    ok(tmp.path(), &["--out", "r", "features", "--data", data.to_str().unwrap(), "--k", "3"]);
    let dir = run_dir(&tmp.path().join("r"), "features");
    let corr = read(&dir.join("correlation.csv"));
    assert_eq!(corr.lines().count(), 1 + 7);
    assert!(corr.starts_with("f1,f2,f3,f4,f5,f6,label\n"));
    let sel = json(&dir.join("selection.json"));
    assert_eq!(sel["features"].as_array().unwrap().len(), 3);
    assert!(json(&dir.join("outliers.json"))["rows"].is_array());
}

#[test]
fn train_hybrid_on_default_data_writes_thirty_epochs() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), &["--out", "r", "train", "--variant", "hybrid", "--svg"]);
    assert!(out.contains("30 epochs"), "{out}");
    let dir = run_dir(&tmp.path().join("r"), "train");
    let history = read(&dir.join("history.csv"));
    assert_eq!(history.lines().count(), 31);
    assert!(history.starts_with("epoch,train_loss,val_loss,train_acc,val_acc\n"));
    assert!(read(&dir.join("history.svg")).contains(">Epochs<"));
    let manifest = json(&dir.join("manifest.json"));
    let outputs: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["path"].as_str().unwrap())
        .collect();
    assert_eq!(outputs, ["config.json", "checkpoint.json", "history.csv", "history.svg"]);
}

#[test]
fn zero_learning_rate_keeps_initial_parameters() {
    let tmp = TempDir::new().unwrap();
    let data = generate(tmp.path(), "g", &["--samples", "60"]);
    ok(
        tmp.path(),
        &["--out", "r", "train", "--data", data.to_str().unwrap(), "--variant", "gru", "--lr", "0", "--epochs", "2"],
    );
    let ck = Checkpoint::load(&run_dir(&tmp.path().join("r"), "train").join("checkpoint.json")).unwrap();
    let trained = ck.model().unwrap();
    let initial = Model::init(ck.spec.clone(), 42).unwrap();
    assert_eq!(trained, initial);
}

#[test]
fn same_seed_same_files_and_manifest_replay() {
    let tmp = TempDir::new().unwrap();
    let data = generate(tmp.path(), "g", &["--samples", "80"]);
    let d = data.to_str().unwrap();
    let args = |out: &'static str| vec!["--out", out, "train", "--data", d, "--variant", "bilstm", "--epochs", "3", "--seed", "9"];
    ok(tmp.path(), &args("a"));
    ok(tmp.path(), &args("b"));
    let (a, b) = (run_dir(&tmp.path().join("a"), "train"), run_dir(&tmp.path().join("b"), "train"));
    for f in ["history.csv", "checkpoint.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }

    // replay from the stored config and the manifest's input list
    let manifest = json(&a.join("manifest.json"));
    let input = manifest["inputs"][0]["path"].as_str().unwrap().to_string();
    let config = a.join("config.json");
    ok(tmp.path(), &["--config", config.to_str().unwrap(), "--out", "replay", "train", "--data", &input]);
    let c = run_dir(&tmp.path().join("replay"), "train");
    for f in ["history.csv", "checkpoint.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(c.join(f)).unwrap(), "{f}");
    }
    // config.json differs only in output_dir, which --out overrides
    let replayed = json(&c.join("manifest.json"));
    assert_eq!(replayed["outputs"].as_array().unwrap()[1..], manifest["outputs"].as_array().unwrap()[1..]);
}

#[test]
fn evaluate_single_and_compare() {
    let tmp = TempDir::new().unwrap();
    let data = generate(tmp.path(), "g", &["--samples", "300", "--separability", "4"]);
    let d = data.to_str().unwrap();
    let mut cks = Vec::new();
    for v in ["bilstm", "gru", "hybrid"] {
        let out = format!("t-{v}");
        ok(tmp.path(), &["--out", &out, "train", "--data", d, "--variant", v]);
        cks.push(run_dir(&tmp.path().join(&out), "train").join("checkpoint.json"));
    }
    let ck = |i: usize| cks[i].to_str().unwrap().to_string();

    let table = ok(tmp.path(), &["--out", "e1", "evaluate", "--checkpoint", &ck(2), "--data", d]);
    assert!(table.contains("| Parameters | Value (%) |"));
    let report = json(&run_dir(&tmp.path().join("e1"), "evaluate").join("report.json"));
    assert!(report["metrics"]["accuracy"].as_f64().unwrap() >= 0.95, "{report}");
    assert_eq!(report["curves_file"], "roc.csv");
    assert_eq!(report["version"], 1);

    let table = ok(
        tmp.path(),
        &["--out", "e3", "evaluate", "--checkpoint", &ck(2), "--data", d, "--compare", &ck(0), &ck(1)],
    );
    let block = &table[table.find("Comparison").expect("comparison block")..];
    let rows: Vec<&str> = block.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| Model")).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("| hybrid |") && rows[1].starts_with("| bilstm |") && rows[2].starts_with("| gru |"));

    let dir = run_dir(&tmp.path().join("e3"), "evaluate");
    let inputs: Vec<String> = (1..=3).map(|i| dir.join(format!("report_{i}.json")).display().to_string()).collect();
    let mut args = vec!["report", "--format", "csv"];
    args.extend(inputs.iter().map(String::as_str));
    let csv = ok(tmp.path(), &args);
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().nth(1).unwrap().starts_with("hybrid,"));
}

#[test]
fn evaluate_rejects_empty_data_and_mismatched_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let data = generate(tmp.path(), "g", &["--samples", "40"]);
    let d = data.to_str().unwrap();
    ok(tmp.path(), &["--out", "t", "train", "--data", d, "--variant", "gru", "--epochs", "1"]);
    let ck = run_dir(&tmp.path().join("t"), "train").join("checkpoint.json");

    std::fs::write(tmp.path().join("empty.csv"), "sample_id,t,f1,f2,f3,f4,f5,f6,label\n").unwrap();
    stderr_of_failure(tmp.path(), &["--out", "e", "evaluate", "--checkpoint", ck.to_str().unwrap(), "--data", "empty.csv"]);

    let narrow = generate(tmp.path(), "n", &["--samples", "40", "--features", "3"]);
    let err = stderr_of_failure(
        tmp.path(),
        &["--out", "e", "evaluate", "--checkpoint", ck.to_str().unwrap(), "--data", narrow.to_str().unwrap()],
    );
    assert!(err.contains("f4"), "{err}");

    let mut bad: Value = json(&ck);
    bad["spec"]["hidden_sizes"] = serde_json::json!([3]);
    std::fs::write(tmp.path().join("bad.json"), bad.to_string()).unwrap();
    let err = stderr_of_failure(tmp.path(), &["--out", "e", "evaluate", "--checkpoint", "bad.json", "--data", d]);
    assert!(err.contains("shape"), "{err}");
}

#[test]
fn gradcheck_passes_filters_and_catches_corruption() {
    let tmp = TempDir::new().unwrap();
    let all = ok(tmp.path(), &["gradcheck"]);
    assert!(all.contains("bilstm.fwd.w_i") && all.contains("gru.w_c") && !all.contains("FAIL"));

    let gru = ok(tmp.path(), &["gradcheck", "--variant", "gru"]);
    let tensors: Vec<&str> = gru.lines().skip(1).filter_map(|l| l.split_whitespace().nth(1)).collect();
    assert!(tensors.iter().any(|t| t.starts_with("gru.")));
    assert!(!gru.contains("bilstm."));

    let out = rcad(tmp.path(), &["gradcheck", "--variant", "gru", "--corrupt", "gru.u_m"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("gru.u_m"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn train_reports_divergence() {
    let tmp = TempDir::new().unwrap();
    let data = generate(tmp.path(), "g", &["--samples", "40"]);
    let err = stderr_of_failure(
        tmp.path(),
        &["--out", "t", "train", "--data", data.to_str().unwrap(), "--optimizer", "sgd", "--lr", "1e308", "--epochs", "3"],
    );
    assert!(err.contains("non-finite loss") && err.contains("epoch") && err.contains("batch"), "{err}");
}
