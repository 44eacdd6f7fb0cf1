use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn geofence(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geofence"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const SHORT: &str =
    "n_devices = 12\ntau = 16\nhorizon_ttis = 3600000\n[arrivals]\nclock_origin = 9.0\n";

#[test]
fn run_one_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SHORT);
    let out = tmp.path().join("out");
    let o = geofence(&[
        "run-one",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "metrics.json",
        "events.jsonl",
        "placement.csv",
        "config.toml",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert!(!out.join("qtable.txt").exists());
    let metrics = fs::read_to_string(out.join("metrics.json")).unwrap();
    assert!(metrics.contains("\"policy\": \"grid\""));
    let placement = fs::read_to_string(out.join("placement.csv")).unwrap();
    assert_eq!(placement.lines().count(), 13);
}

#[test]
fn run_one_rl_writes_qtable() {
    let tmp = tempfile::tempdir().unwrap();
    let body =
        format!("{SHORT}[training]\nepisodes = 5\nplacement_budget = 2\nplacement_rollouts = 1\n");
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("out");
    let o = geofence(&[
        "run-one",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--policy",
        "rl",
        "--parallel",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let q = fs::read_to_string(out.join("qtable.txt")).unwrap();
    assert!(q.starts_with("geofence-qtable v1"));
}

#[test]
fn sweep_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = geofence(&[
            "sweep",
            "--out",
            out.to_str().unwrap(),
            "--policy",
            "grid",
            "--trials",
            "20",
            "--n",
            "4,8",
            "--tau",
            "1,64",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("sweep.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("policy,N,tau_ms,trials,P_det,P_early,mean_T_det_s,ci_halfwidth,status")
    );
    assert_eq!(lines.count(), 4);
    assert!(!text.contains('\r'));
}

#[test]
fn nmin_rejects_too_few_trials() {
    let tmp = tempfile::tempdir().unwrap();
    let o = geofence(&[
        "nmin",
        "--out",
        tmp.path().to_str().unwrap(),
        "--policy",
        "grid",
        "--trials",
        "50",
        "--target",
        "0.99",
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("trials"));
}

#[test]
fn nmin_writes_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let o = geofence(&[
        "nmin",
        "--out",
        tmp.path().to_str().unwrap(),
        "--policy",
        "grid",
        "--trials",
        "20",
        "--target",
        "0.5",
        "--n",
        "4,8,16",
        "--tau",
        "1,1024",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(tmp.path().join("nmin.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "policy,tau_ms,target,trials,N_min,P_det_at_N_min,ci_low_at_N_min"
    );
    assert_eq!(lines.len(), 3);
    assert!(tmp.path().join("nmin_probes.csv").exists());
}

#[test]
fn energy_table_has_six_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "n_devices = 20\ntau = 1024\n[energy]\np_sense = 0.002\ninitial_fraction = 0.5\n\
                [training]\nepisodes = 5\nplacement_budget = 1\nplacement_rollouts = 1\n";
    let cfg = write_config(tmp.path(), body);
    let o = geofence(&[
        "energy-table",
        "--config",
        &cfg,
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(tmp.path().join("energy_table.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("06:00,"));
    for row in &lines[1..] {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f.len(), 7);
        for v in &f[1..] {
            assert!(v.parse::<f64>().unwrap().is_finite());
        }
    }
}

#[test]
fn config_errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tau = 0\n");
    let o = geofence(&[
        "run-one",
        "--config",
        &cfg,
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("tau"));

    let cfg = write_config(tmp.path(), "no_such_field = 1\n");
    let o = geofence(&[
        "run-one",
        "--config",
        &cfg,
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());

    let o = geofence(&[
        "sweep",
        "--out",
        tmp.path().to_str().unwrap(),
        "--policy",
        "bogus",
    ]);
    assert!(!o.status.success());
}
