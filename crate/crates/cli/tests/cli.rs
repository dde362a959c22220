use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tumorkin_cli::io::{read_patients, read_table, write_patients};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tumorkin"));
    cmd.args(args).arg("--out").arg(out).env_remove("TUMORKIN_OUT");
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

/// Copies a shipped config with `edit` applied.
fn edited(dir: &Path, name: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(configs().join(name)).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    path
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate"], None, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn unreadable_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate"], Some(&dir.path().join("nope.json")), dir.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn invalid_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(_, fn(&mut Value)); 3] = [
        ("gompertz_2d.json", |v| v["schema_version"] = 2.into()),
        ("control_p2_unit.json", |v| v["sweep"]["kappas"] = Value::Array(vec![])),
        ("gompertz_2d.json", |v| v["grid"]["n"] = 1.into()),
    ];
    for (name, edit) in cases {
        let cfg = edited(dir.path(), name, edit);
        let out = run(&["simulate"], Some(&cfg), &dir.path().join("out"));
        assert_eq!(out.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn zero_horizon_returns_the_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), "gompertz_2d.json", |v| v["grid"]["t_final"] = 0.0.into());
    let out_dir = dir.path().join("out");
    let out = run(&["simulate"], Some(&cfg), &out_dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, times) = read_table(&out_dir.join("snapshot_times.csv")).unwrap();
    assert_eq!(times, vec![vec![0.0, 0.0]]);
    // the initial density does not depend on the parameters, so the band collapses
    let (header, rows) = read_table(&out_dir.join("moments.csv")).unwrap();
    assert_eq!(header, ["t", "mean_m", "p10", "p90", "var_z"]);
    let r = &rows[0];
    assert!((r[2] - r[1]).abs() < 1e-12 && (r[3] - r[1]).abs() < 1e-12);
    assert!(r[4].abs() < 1e-20);
    assert!(!out_dir.join("snapshot_001.csv").exists());
}

#[test]
fn synth_output_round_trips_and_follows_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("synth_vb.json");
    let a = dir.path().join("a");
    assert!(run(&["synth"], Some(&cfg), &a).status.success());
    let series = read_patients(&a.join("cohort.csv")).unwrap();
    assert_eq!(series.len(), 13);
    assert!(series.iter().all(|s| s.observations.len() == 7));

    let copy = dir.path().join("copy.csv");
    write_patients(&copy, &series).unwrap();
    assert_eq!(read_patients(&copy).unwrap(), series);

    let b = dir.path().join("b");
    assert!(run(&["synth", "--seed", "8"], Some(&cfg), &b).status.success());
    assert_ne!(read_patients(&b.join("cohort.csv")).unwrap(), series);
}

#[test]
fn patient_csv_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let bad_header = dir.path().join("h.csv");
    std::fs::write(&bad_header, "id,t,v\nP1,0,100\n").unwrap();
    assert!(read_patients(&bad_header).is_err());
    let bad_row = dir.path().join("r.csv");
    std::fs::write(&bad_row, "patient_id,t_days,volume_mm3\nP1,0,abc\n").unwrap();
    assert!(read_patients(&bad_row).is_err());

    let cfg = configs().join("calibrate_vb.json");
    let out = run(&["calibrate", "--input", bad_row.to_str().unwrap()], Some(&cfg), &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
}
