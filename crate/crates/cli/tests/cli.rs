use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
[market]
s0 = 100.0
sigma = 0.2
horizon = 1.0

[payoff]
kind = "put"
strike = 100.0

[info]
epsilon = 1.0
atoms = 4

[numerics]
n_paths = 4000
n_steps = 10
seed = 11
all_routes = false

[lattice]
steps = 4
"#;

fn infoval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infoval"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn price_writes_report_tables_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("out");
    let o = infoval(&["price", "--config", s(&cfg), "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["atoms"].as_array().unwrap().len(), 4);
    let csv = fs::read_to_string(out.join("atoms.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["seed"], 11);
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(outputs.iter().any(|p| p.ends_with("report.json")));
    assert!(outputs.iter().any(|p| p.ends_with("atoms.csv")));
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("out");
    let o = infoval(&["price", "--config", s(&cfg), "--seed", "99", "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(manifest(&out)["seed"], 99);
}

#[test]
fn identical_output_across_runs_and_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let read = |dir: &Path| {
        (
            fs::read(dir.join("report.json")).unwrap(),
            fs::read(dir.join("atoms.csv")).unwrap(),
        )
    };
    let mut runs = Vec::new();
    for (i, threads) in ["1", "2", "1"].iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let o = infoval(&["price", "--config", s(&cfg), "--threads", threads, "--out-dir", s(&out)]);
        assert_eq!(o.status.code(), Some(0));
        runs.push(read(&out));
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn missing_config_is_a_config_error_with_manifest() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = infoval(&["price", "--config", s(&tmp.path().join("nope.toml")), "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let m = manifest(&out);
    assert_eq!(m["status"], "failed");
    assert_eq!(m["exit_code"], 2);
    assert!(m["error"].as_str().unwrap().contains("nope.toml"));
}

#[test]
fn zero_noise_is_rejected_citing_the_density_hypothesis() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "zero.toml", &SMALL.replace("epsilon = 1.0", "epsilon = 0.0"));
    let out = tmp.path().join("out");
    let o = infoval(&["price", "--config", s(&cfg), "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("density hypothesis"));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", &SMALL.replace("atoms = 4", "atoms = 4\nrho = 0.3"));
    let o = infoval(&["price", "--config", s(&cfg), "--out-dir", s(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_lattice_suite_passes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = infoval(&["verify", "--suite", "lattice", "--out-dir", s(&out)]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("PASS insider value = enlarged-filtration DP"));
    assert!(!stdout.contains("FAIL"));
    // only the lattice suite ran
    assert!(!stdout.contains("Skorokhod"));
    let checks: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert!(checks.as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn broken_reflection_fails_verification() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = infoval(&["verify", "--suite", "rbsde", "--break-skorokhod", "--out-dir", s(&out)]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(1), "{stdout}");
    assert!(stdout.contains("FAIL Skorokhod residual, base solve"));
    assert_eq!(manifest(&out)["exit_code"], 1);
}

#[test]
fn unknown_suite_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let o = infoval(&["verify", "--suite", "everything", "--out-dir", s(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
}

fn sweep_rows(dir: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(dir.join("sweep.csv")).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn epsilon_sweep_has_one_row_per_value_and_falling_cei() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", &SMALL.replace("n_paths = 4000", "n_paths = 20000"));
    let out = tmp.path().join("out");
    let o = infoval(&["sweep", "--config", s(&cfg), "--out-dir", s(&out), "epsilon=0.1,1,10"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = sweep_rows(&out);
    assert_eq!(rows.len(), 3);
    let cei: Vec<(f64, f64)> = rows.iter().map(|r| (r[5].parse().unwrap(), r[6].parse().unwrap())).collect();
    for w in cei.windows(2) {
        let band = 3.0 * (w[0].1 * w[0].1 + w[1].1 * w[1].1).sqrt();
        assert!(w[1].0 <= w[0].0 + band, "{cei:?}");
    }
}

#[test]
fn strike_sweep_raises_the_put_value() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("out");
    let o = infoval(&["sweep", "--config", s(&cfg), "--out-dir", s(&out), "strike=90,100,110"]);
    assert_eq!(o.status.code(), Some(0));
    let base: Vec<f64> = sweep_rows(&out).iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(base.windows(2).all(|w| w[1] >= w[0]), "{base:?}");
}

#[test]
fn unknown_sweep_parameter_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let o = infoval(&["sweep", "--config", s(&cfg), "--out-dir", s(&tmp.path().join("out")), "rho=0.1,0.2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = infoval(&["sweep", "--config", s(&cfg), "--out-dir", s(&tmp.path().join("out")), "epsilon=1,-1"]);
    assert_eq!(o.status.code(), Some(2));
}
