use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn specedge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specedge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_with(dir: &Path, sub: &str, config: &str, out: &str) -> Output {
    let path = dir.join(format!("{sub}-{out}.json"));
    fs::write(&path, config).unwrap();
    let out_dir = dir.join(out);
    specedge(&[
        sub,
        "--config",
        path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--threads",
        "2",
    ])
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn edge_writes_json_and_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_with(tmp.path(), "edge", r#"{"profile": {"variant": "band", "p": 0.5}}"#, "a");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&tmp.path().join("a/edge.json"));
    assert_eq!(doc["schema_version"], 1);
    let hash = doc["config_hash"].as_str().unwrap().to_string();
    let csv = fs::read_to_string(tmp.path().join("a/edge.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "config_hash,k,m_2k,edge_root,edge_ratio");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 13);
    assert!(rows.iter().all(|r| r.starts_with(&hash)));
}

#[test]
fn converge_is_bit_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"profile": {"variant": "band", "p": 0.5}, "n_grid": [32, 64], "seeds": [4, 5, 6]}"#;
    for out in ["a", "b"] {
        let o = run_with(tmp.path(), "converge", cfg, out);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["converge.json", "converge_runs.csv", "converge_summary.csv"] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let doc = json(&tmp.path().join("a/converge.json"));
    let hash = doc["config_hash"].as_str().unwrap();
    let runs = fs::read_to_string(tmp.path().join("a/converge_runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 6);
    assert!(runs.lines().skip(1).all(|l| l.starts_with(hash)));
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    // too few seeds
    let o = run_with(tmp.path(), "converge", r#"{"n_grid": [16], "seeds": [1, 2]}"#, "a");
    assert_eq!(o.status.code(), Some(1));
    // memory guard
    let o = run_with(tmp.path(), "converge", r#"{"n_grid": [5000], "seeds": [1, 2, 3]}"#, "b");
    assert_eq!(o.status.code(), Some(1));
    // asymmetric variance matrix is rejected before the oracle runs
    let o = run_with(
        tmp.path(),
        "oracle",
        r#"{"profile": {"variant": "custom", "matrices": {"2": [[1.0, 0.3], [0.2, 1.0]]}}}"#,
        "c",
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(!tmp.path().join("c").exists());
    // unknown field
    let o = run_with(tmp.path(), "edge", r#"{"profiles": {}}"#, "d");
    assert_eq!(o.status.code(), Some(1));
    // missing file
    let o = specedge(&["edge", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn oracle_failure_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let small = r#"{"oracle": {"ns": [3], "ks": [2], "samples": 2000, "random_profiles": 1, "z_max": 4.0}}"#;
    let o = run_with(tmp.path(), "oracle", small, "ok");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    // no Monte Carlo error budget at all
    let strict = r#"{"oracle": {"ns": [3], "ks": [2], "samples": 2000, "random_profiles": 1, "z_max": 0.0}}"#;
    let o = run_with(tmp.path(), "oracle", strict, "bad");
    assert_eq!(o.status.code(), Some(2));
    let doc = json(&tmp.path().join("bad/oracle.json"));
    assert_eq!(doc["passes"], false);
}

#[test]
fn audit_reports_routes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_with(tmp.path(), "audit", r#"{"n_grid": [16, 32, 64]}"#, "a");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&tmp.path().join("a/audit.json"));
    let names: Vec<&str> = doc["qualifies_for"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert!(names.contains(&"doubling (almost surely)"), "{names:?}");
    assert!(String::from_utf8_lossy(&o.stdout).contains("doubling"));
}

#[test]
fn negative_control_exit_reflects_expectation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"distribution": {"name": "rademacher"}, "n_grid": [32, 64], "seeds": [1, 2, 3]}"#;
    let o = run_with(tmp.path(), "negative-control", cfg, "a");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("a/negative_control_runs.csv")).unwrap();
    assert!(csv.starts_with("config_hash,n,seed,statistic,threshold,gt_nonzeros,max_entry_scaled"));
    // a light-tailed law whose medians are forced to look divergent cannot be
    // consistent: with a huge negative excess every increasing sweep diverges
    let cfg = r#"{"distribution": {"name": "gaussian"}, "n_grid": [8, 256], "seeds": [1, 2, 3],
        "negative": {"excess": -0.99}}"#;
    let o = run_with(tmp.path(), "negative-control", cfg, "b");
    let doc = json(&tmp.path().join("b/negative_control.json"));
    let expected = if doc["diverging"] == true { 2 } else { 0 };
    assert_eq!(o.status.code(), Some(expected));
}
