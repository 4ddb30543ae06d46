use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn declab(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_declab"));
    cmd.args(args).env_remove("THREADS");
    if let Some(t) = threads {
        cmd.env("THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout_record(out: &Output) -> Value {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "stdout: {text}");
    serde_json::from_str(&text).unwrap()
}

fn strip_timestamp(manifest: &str) -> Value {
    let mut v: Value = serde_json::from_str(manifest).unwrap();
    v.as_object_mut().unwrap().remove("created_unix");
    v.as_object_mut().unwrap().remove("results_file");
    v["config"].as_object_mut().unwrap().remove("output");
    v
}

const BORN: &str = r#"{
  "schema_version": 1, "experiment": "born_check", "seed": 42,
  "walk": {"step_sigma": 0.02},
  "ensemble": {"p0": [0.3, 0.7], "n_traj": 100000}
}"#;

#[test]
fn born_check_writes_table_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "born.json", BORN);
    let prefix = dir.path().join("out/born");
    let out = declab(&["run", &cfg, "--out", prefix.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_record(&out)["status"], "ok");

    let csv = std::fs::read_to_string(prefix.with_extension("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("channel,p0,pi_hat,std_err"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert!(!csv.contains('\r'));
    let mut total = 0.0;
    for (j, row) in rows.iter().enumerate() {
        assert_eq!(row[0], j.to_string());
        let pi: f64 = row[2].parse().unwrap();
        let se: f64 = row[3].parse().unwrap();
        assert!((se - (pi * (1.0 - pi) / 1e5).sqrt()).abs() < 1e-15);
        total += pi;
    }
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(rows[0][1], "2.9999999999999999e-1");

    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(prefix.with_extension("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["experiment"], "born_check");
    assert_eq!(manifest["results_file"], "born.results.csv");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["config"]["walk"]["max_steps"], 10_000_000);
    assert!(manifest["summary"]["truncation_fraction"].as_f64().unwrap() < 1e-3);
}

#[test]
fn manifest_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "r.json", r#"{"schema_version": 1, "experiment": "reduction", "seed": 9,
        "walk": {"step_sigma": 0.02}, "ensemble": {"p0": [0.2, 0.3, 0.5], "n_traj": 500}}"#);
    let first = dir.path().join("first");
    assert!(declab(&["run", &cfg, "--out", first.to_str().unwrap()], None).status.success());

    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(first.with_extension("manifest.json")).unwrap()).unwrap();
    let replay = write_config(dir.path(), "replay.json", &manifest["config"].to_string());
    let second = dir.path().join("second");
    assert!(declab(&["run", &replay, "--out", second.to_str().unwrap()], None).status.success());
    assert_eq!(
        std::fs::read(first.with_extension("results.csv")).unwrap(),
        std::fs::read(second.with_extension("results.csv")).unwrap()
    );
}

#[test]
fn results_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "r.json", r#"{"schema_version": 1, "experiment": "reduction", "seed": 3,
        "walk": {"step_sigma": 0.01, "covariance": [[2, 0.5, 0], [0.5, 1, 0], [0, 0, 1]]},
        "ensemble": {"p0": [0.25, 0.25, 0.5], "n_traj": 3000}}"#);
    let mut files = Vec::new();
    for (name, flag, env) in [("a", Some("1"), None), ("b", Some("1"), None), ("c", Some("8"), None), ("d", None, Some("8"))] {
        let prefix = dir.path().join(name);
        let mut args = vec!["run", cfg.as_str(), "--out", prefix.to_str().unwrap()];
        if let Some(t) = flag {
            args.extend(["--threads", t]);
        }
        let out = declab(&args, env);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let results = std::fs::read(prefix.with_extension("results.csv")).unwrap();
        let manifest = strip_timestamp(&std::fs::read_to_string(prefix.with_extension("manifest.json")).unwrap());
        files.push((results, manifest));
    }
    for f in &files[1..] {
        assert!(f.0 == files[0].0, "results differ");
        assert_eq!(f.1, files[0].1);
    }
}

#[test]
fn seed_override_changes_results_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "r.json", r#"{"schema_version": 1, "experiment": "reduction", "seed": 1,
        "walk": {"step_sigma": 0.05}, "ensemble": {"p0": [0.5, 0.5], "n_traj": 200}}"#);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(declab(&["run", &cfg, "--out", a.to_str().unwrap()], None).status.success());
    assert!(declab(&["run", &cfg, "--out", b.to_str().unwrap(), "--seed", "2"], None).status.success());
    assert_ne!(std::fs::read(a.with_extension("results.csv")).unwrap(), std::fs::read(b.with_extension("results.csv")).unwrap());
    let m: Value = serde_json::from_str(&std::fs::read_to_string(b.with_extension("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 2);
    assert_eq!(m["config"]["seed"], 2);
}

#[test]
fn decoherence_time_series_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d.json", r#"{"schema_version": 1, "experiment": "decoherence", "seed": 1,
        "scenario": {"model": "pointer_bath", "n_sites": 3, "n_env": 4, "lambda": 0.3},
        "evolution": {"t_max": 4.0, "n_samples": 40}}"#);
    let prefix = dir.path().join("d");
    let out = declab(&["run", &cfg, "--out", prefix.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(prefix.with_extension("results.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,p_1,p_2,p_3,offdiag_norm,tr_rho_hidden_sq,cross_term"));
    assert_eq!(csv.lines().count(), 42);
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[1] + v[2] + v[3] - 1.0).abs() < 1e-10);
    }
}

#[test]
fn json_format_and_drift_study() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", r#"{"schema_version": 1, "experiment": "drift_study", "seed": 3,
        "scenario": {"model": "pointer_ruler_phonon", "lambda": 0.1}, "evolution": {"t_max": 2.0, "n_samples": 4}}"#);
    let prefix = dir.path().join("s");
    let out = declab(&["run", &cfg, "--out", prefix.to_str().unwrap(), "--format", "json"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(prefix.with_extension("results.json")).unwrap()).unwrap();
    assert_eq!(v["columns"][0], "t");
    assert_eq!(v["rows"].as_array().unwrap().len(), 5);
    assert!(stdout_record(&out)["summary"]["max_abs_drift"].as_f64().unwrap() > 1e-6);
}

#[test]
fn validate_reports_findings_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("v");
    let good = write_config(dir.path(), "good.json", BORN);
    let out = declab(&["run", &good, "--validate", "--out", prefix.to_str().unwrap()], None);
    assert!(out.status.success());
    assert_eq!(stdout_record(&out)["status"], "valid");

    let psd = write_config(dir.path(), "psd.json", r#"{"schema_version": 1, "experiment": "anisotropy", "seed": 1,
        "walk": {"step_sigma": 0.01, "covariance": [[1, 2, 0], [2, 1, 0], [0, 0, 1]]},
        "ensemble": {"p0": [0.2, 0.3, 0.5], "n_traj": 10}}"#);
    let out = declab(&["run", &psd, "--validate"], None);
    assert_eq!(out.status.code(), Some(2));
    let rec = stdout_record(&out);
    assert_eq!(rec["status"], "invalid");
    assert!(rec["findings"][0]["message"].as_str().unwrap().contains("positive semidefinite"));

    let blocks = write_config(dir.path(), "blocks.json", r#"{"schema_version": 1, "experiment": "decoherence", "seed": 1,
        "scenario": {"model": "pointer_bath", "n_sites": 3, "lambda": 0.2, "channel_blocks": [[0, 1], [1, 2]]},
        "evolution": {"t_max": 1.0}}"#);
    let out = declab(&["run", &blocks, "--validate"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout_record(&out)["findings"][0]["message"].as_str().unwrap().contains("resolve the identity"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 3);
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(declab(&[], None).status.code(), Some(2));
    assert_eq!(declab(&["run"], None).status.code(), Some(2));
    assert_eq!(declab(&["run", "/nonexistent/config.json"], None).status.code(), Some(2));
    let cfg = write_config(dir.path(), "x.json", BORN);
    assert_eq!(declab(&["run", &cfg, "--format", "xml"], None).status.code(), Some(2));
    assert_eq!(declab(&["run", &cfg, "--threads", "0"], None).status.code(), Some(2));

    for body in [
        "not json",
        r#"{"schema_version": 2, "experiment": "born_check", "seed": 1}"#,
        r#"{"schema_version": 1, "experiment": "born_check", "walk": {"step_sigma": 0.1}, "ensemble": {"p0": [0.5, 0.5], "n_traj": 1}}"#,
        r#"{"schema_version": 1, "experiment": "born_check", "seed": 1, "typo": 0}"#,
    ] {
        let cfg = write_config(dir.path(), "bad.json", body);
        let out = declab(&["run", &cfg], None);
        assert_eq!(out.status.code(), Some(2), "{body}");
        assert_eq!(stdout_record(&out)["status"], "invalid");
    }
}

#[test]
fn runtime_violation_exits_with_three_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "t.json", r#"{"schema_version": 1, "experiment": "born_check", "seed": 1,
        "walk": {"step_sigma": 0.001, "max_steps": 5}, "ensemble": {"p0": [0.4, 0.6], "n_traj": 10}}"#);
    let prefix = dir.path().join("out/t");
    let out = declab(&["run", &cfg, "--out", prefix.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3));
    let rec = stdout_record(&out);
    assert_eq!(rec["status"], "error");
    assert_eq!(rec["invariant"], "completed_trajectories");
    assert!(!dir.path().join("out").exists());
}
