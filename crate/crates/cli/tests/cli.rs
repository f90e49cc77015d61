use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dsm_cli::artifacts::{read_json, read_rows, read_schedule, schedule_file, LoadCurveRow, SweepRow, LOAD_CURVES, REPORT};
use dsm_core::{synth_days, Category, SimulationReport};
use serde_json::{json, Value};

fn dsm(config: &Value, dir: &Path) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config.to_string()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_dsm"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

fn small() -> Value {
    json!({
        "seed": 1,
        "intervals_per_day": 6,
        "dt": 4.0,
        "days": 1,
        "households": [
            {"category": "LOW"}, {"category": "BASE"}, {"category": "HIGH"}, {"category": "BASE"}
        ]
    })
}

#[test]
fn smoke_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dsm(&small(), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("out");
    let report: SimulationReport = read_json(&root.join(REPORT)).unwrap();
    assert!(report.all_converged);
    assert_eq!((report.days, report.participants), (1, 4));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(root.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["mode"], "single");
    for f in manifest["files"].as_array().unwrap() {
        assert!(root.join(f.as_str().unwrap()).is_file(), "{f}");
    }
    let rows: Vec<LoadCurveRow> = read_rows(&root.join(LOAD_CURVES)).unwrap();
    assert_eq!(rows.len(), 6);
    let sched = read_schedule(&schedule_file(&root, 0)).unwrap();
    assert_eq!(sched.len(), 4);
    assert!(sched.iter().all(|r| r.decisions.len() == 6));
}

#[test]
fn oracle_mode_reports_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = dsm(&json!({"mode": "oracle-check", "oracle": {"instances": 8, "resolution": 0.02, "tolerance": 0.04}}), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/oracle.json")).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["instances"], 8);
}

#[test]
fn missing_demand_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent_demand.csv");
    let mut cfg = small();
    cfg["data"] = json!({"kind": "csv", "demand": missing, "pv": dir.path().join("pv.csv")});
    let out = dsm(&cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent_demand.csv"));
}

#[test]
fn malformed_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dsm(&json!({"battery": {"eta_plus": "high"}}), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("battery.eta_plus"));
}

#[test]
fn zero_error_sweep_point_matches_clean_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut single = small();
    single["days"] = json!(3);
    single["errors"] = json!({"eps_d": 0.08, "eps_w": 0.10, "magnitude": 0.0});
    let a = tempfile::tempdir_in(dir.path()).unwrap();
    assert!(dsm(&single, a.path()).status.success());

    let mut sweep = small();
    sweep["days"] = json!(3);
    sweep["mode"] = json!("sweep-error");
    sweep["sweep"] = json!({"remove_per_category": 1, "error_step": 0.5, "mono_types": []});
    let b = tempfile::tempdir_in(dir.path()).unwrap();
    assert!(dsm(&sweep, b.path()).status.success());

    let rows: Vec<SweepRow> = read_rows(&b.path().join("out/sweep.csv")).unwrap();
    let mags: Vec<f64> = rows.iter().map(|r| r.error_magnitude).collect();
    assert_eq!(mags, vec![0.0, 0.5, 1.0]);
    for f in [REPORT, LOAD_CURVES, "schedules/day_002.csv"] {
        let x = fs::read(a.path().join("out").join(f)).unwrap();
        let y = fs::read(b.path().join("out/point_00").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn csv_data_source_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cats = [Category::Low, Category::Base, Category::High, Category::Base];
    let days = synth_days::<f64>(9, &cats, 24, 100, 2);
    let (demand, pv) = (dir.path().join("demand.csv"), dir.path().join("pv.csv"));
    dsm_core::write_csv_traces(&days, &demand, &pv).unwrap();
    let mut cfg = small();
    cfg["intervals_per_day"] = json!(24);
    cfg["dt"] = json!(1.0);
    cfg["days"] = json!(2);
    cfg["data"] = json!({"kind": "csv", "demand": demand, "pv": pv});
    let out = dsm(&cfg, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<LoadCurveRow> = read_rows(&dir.path().join("out").join(LOAD_CURVES)).unwrap();
    assert_eq!(rows.len(), 48);
    for (row, t) in rows.iter().zip(0..) {
        let day = &days[t / 24];
        let expected: f64 = day.actual_demand.iter().map(|d| d[t % 24]).sum();
        assert!((row.demand - expected).abs() < 1e-9, "{} vs {expected}", row.demand);
    }
}

#[test]
fn csv_with_too_few_households_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let days = synth_days::<f64>(9, &[Category::Low, Category::High], 24, 0, 1);
    let (demand, pv) = (dir.path().join("demand.csv"), dir.path().join("pv.csv"));
    dsm_core::write_csv_traces(&days, &demand, &pv).unwrap();
    let mut cfg = small();
    cfg["intervals_per_day"] = json!(24);
    cfg["dt"] = json!(1.0);
    cfg["data"] = json!({"kind": "csv", "demand": demand, "pv": pv});
    assert_eq!(dsm(&cfg, dir.path()).status.code(), Some(3));
}
