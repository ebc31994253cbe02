use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fedos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedos"))
        .args(args)
        .env_remove("FEDOS_DATA_ROOT")
        .output()
        .expect("binary runs")
}

fn ok_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).expect("one JSON line on stdout");
    assert_eq!(v["status"], "ok");
    v
}

fn err_json(out: &Output, code: i32) -> Value {
    assert_eq!(out.status.code(), Some(code), "{}", String::from_utf8_lossy(&out.stdout));
    let line = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(line.trim_end().lines().count(), 1, "{line}");
    let v: Value = serde_json::from_str(&line).expect("machine-readable error line");
    assert_eq!(v["status"], "error");
    v
}

fn desk_config(dir: &Path) -> String {
    let p = dir.join("desk.toml");
    std::fs::write(
        &p,
        r#"
seeds = [0]
output_dir = "unused"

[dataset]
source = "synthetic"
val_fraction = 0.2

[dataset.synthetic]
classes = 4
train_samples = 300
test_samples = 60

[partition]
n_clients = 4
samples_per_client = 50

[rounds]
rounds = 2
client_fraction = 0.5

[centralized]
epochs = 1

[report]
checkpoints = [2]
"#,
    )
    .unwrap();
    p.display().to_string()
}

#[test]
fn validate_prints_hash_of_defaults() {
    let v = ok_json(&fedos(&["validate"]));
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    assert!(v["normalized"].as_str().unwrap().contains("n_clients = 20"));
}

#[test]
fn constraint_violation_names_the_key() {
    let v = err_json(&fedos(&["validate", "--alpha", "-1"]), 2);
    assert_eq!(v["kind"], "config");
    assert_eq!(v["path"], "partition.alpha");
}

#[test]
fn unknown_variant_and_flag_are_usage_errors() {
    let v = err_json(&fedos(&["validate", "--variant", "fedsgd"]), 2);
    assert_eq!(v["path"], "variant.kind");
    let v = err_json(&fedos(&["federated", "--speed", "3"]), 2);
    assert_eq!(v["kind"], "usage");
}

#[test]
fn missing_dataset_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let v = err_json(&fedos(&["federated", "--out", out.to_str().unwrap()]), 2);
    assert_eq!(v["path"], "dataset.path");
}

#[test]
fn federated_report_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path());
    let runs = dir.path().join("runs");
    let args = ["federated", "-c", &cfg, "--seed", "5", "--alpha", "0.5", "--out", runs.to_str().unwrap()];
    let v = ok_json(&fedos(&args));
    let run_dir = v["runs"][0]["dir"].as_str().unwrap().to_string();
    assert_eq!(v["runs"][0]["seed"], 5);
    let trace = std::fs::read_to_string(Path::new(&run_dir).join("trace.csv")).unwrap();
    assert!(trace.contains(&format!("# config_hash={}", v["config_hash"].as_str().unwrap())));
    ok_json(&fedos(&args));
    assert_eq!(trace, std::fs::read_to_string(Path::new(&run_dir).join("trace.csv")).unwrap());

    let report = dir.path().join("report");
    let r = ok_json(&fedos(&["report", "--runs", runs.to_str().unwrap(), "--out", report.to_str().unwrap()]));
    assert_eq!(r["runs"], 1);
    assert!(report.join("checkpoints.csv").exists());
    assert!(report.join("traces.svg").exists());
}

#[test]
fn centralized_and_ablation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path());
    let out = dir.path().join("c");
    let v = ok_json(&fedos(&["centralized", "-c", &cfg, "--rounds", "0", "--out", out.to_str().unwrap()]));
    let acc = v["reference_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    let out = dir.path().join("a");
    let v = ok_json(&fedos(&[
        "ablation", "-c", &cfg, "--axis", "client_fraction", "--values", "0.25,2", "--rounds", "1",
        "--out", out.to_str().unwrap(),
    ]));
    assert_eq!(v["failed_cells"], 1);
    assert!(out.join("ablation_client_fraction.csv").exists());
}

#[test]
fn partition_inspect_writes_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path());
    let out = dir.path().join("p");
    let v = ok_json(&fedos(&["partition-inspect", "-c", &cfg, "--alpha", "0.01", "--out", out.to_str().unwrap()]));
    let p = &v["partitions"][0];
    assert_eq!(p["histograms"].as_array().unwrap().len(), 4);
    let d = Path::new(p["dir"].as_str().unwrap());
    assert!(d.join("partition.fsp").exists() && d.join("partition.json").exists());
}

#[test]
fn gan_train_from_raw_pool() {
    let dir = tempfile::tempdir().unwrap();
    let pool = dir.path().join("pool");
    std::fs::create_dir(&pool).unwrap();
    let bytes: Vec<u8> = (0..40 * 3 * 32 * 32).map(|i| (i % 251) as u8).collect();
    std::fs::write(pool.join("a.bin"), bytes).unwrap();
    let ckpt = dir.path().join("g.fsw");
    let v = ok_json(&fedos(&[
        "gan-train", "--pool", pool.to_str().unwrap(), "--epochs", "1", "--out", ckpt.to_str().unwrap(),
    ]));
    assert_eq!(v["pool_images"], 40);
    assert!(v["d_losses"][0].as_f64().unwrap().is_finite());
    assert!(ckpt.exists());
}
