use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"{
  "model": {"statistics": "fermi", "sites": 8, "hopping": 1.0, "mass": 4.0},
  "packets": [
    {"name": "L", "center": 1, "width": 1.0},
    {"name": "R", "center": 6, "width": 1.0}
  ],
  "state": {"terms": [
    {"coefficient": 0.7071067811865476, "packets": ["L", "R"], "species": [0, 1]},
    {"coefficient": 0.7071067811865476, "packets": ["L", "R"], "species": [1, 0]}
  ]},
  "region": {"sites": [0, 1, 2, 3]},
  "analysis": {"replica_check": true}
}"#;

fn qent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qent")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_echoes_materialized_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", CONFIG);
    let out = qent(&["validate", &cfg]);
    assert!(out.status.success());
    let echoed: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(echoed["model"]["species"], 2);
    assert_eq!(echoed["model"]["regime"], "empty");
    assert_eq!(echoed["analysis"]["orders"], serde_json::json!([1.0, 2.0, 3.0]));
}

#[test]
fn gap_violation_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &CONFIG.replace("\"mass\": 4.0", "\"mass\": 1.0"));
    let out = qent(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.mass"));
}

#[test]
fn unknown_packet_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &CONFIG.replacen("[\"L\", \"R\"]", "[\"L\", \"Q\"]", 1));
    let out = qent(&["run", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_file_exits_with_io_code() {
    let out = qent(&["run", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_writes_report_and_replica_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", CONFIG);
    let out_dir = dir.path().join("out");
    let out = qent(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("S_vN"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let sub = report["entropy"]["von_neumann"]["subtracted"].as_f64().unwrap();
    assert!((sub - std::f64::consts::LN_2).abs() < 0.05);
    assert!(report["provenance"]["version"].is_string());
    let replica: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("replica_check.json")).unwrap()).unwrap();
    assert!(replica["max_deviation"].as_f64().unwrap() < 1e-9);
}

#[test]
fn sweep_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let base = CONFIG.replace(",\n  \"analysis\": {\"replica_check\": true}", "");
    let spec = format!(
        r#"{{"base": {base}, "sweep": {{"kind": "separation", "values": [1, 3, 5], "pivot": 3.5, "left": ["L"], "right": ["R"]}}}}"#
    );
    let path = write(dir.path(), "s.json", &spec);
    let out_dir = dir.path().join("sweep");
    let out = qent(&["sweep", &path, "--out", out_dir.to_str().unwrap(), "--jobs", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("separation,overlap_abs,delta_S1,delta_S2,delta_S3,norm_dev,vac_S1,vac_S2"));
    assert_eq!(lines.count(), 3);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["succeeded"], 3);
    assert_eq!(summary["decreasing"], true);
}

#[test]
fn malformed_sweep_reports_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "s.json", r#"{"base": {}, "sweep": {"kind": "separation"}}"#);
    let out = qent(&["sweep", &path]);
    assert_eq!(out.status.code(), Some(2));
}
