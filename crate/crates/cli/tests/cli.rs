use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ofbmlab(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ofbmlab"));
    cmd.args(args).env_remove("OFBMLAB_THREADS");
    if let Some(t) = threads {
        cmd.env("OFBMLAB_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn shipped_config() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/ofgn_d2.json").to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn hermite_rank_of_identity_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"g": "identity"}"#);
    let o = ofbmlab(&["hermite-rank", "--config", &cfg], None);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("1"));
    let rest: String = lines.collect::<Vec<_>>().join("\n");
    let table: Value = serde_json::from_str(&rest).unwrap();
    assert_eq!(table["dim"], 2);
}

#[test]
fn hermite_rank_of_acceptance_functional_is_one() {
    let o = ofbmlab(&["hermite-rank", "--config", &shipped_config()], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("1\n"));
}

#[test]
fn check_condition_on_shipped_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let o = ofbmlab(&["check-condition", "--config", &shipped_config(), "--out", &out], None);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["pass"], true);
    assert!(dir.path().join("condition_h.json").is_file());
}

#[test]
fn check_condition_failure_exits_one_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"family": "white", "g": "identity"}"#);
    let out = dir.path().to_string_lossy().into_owned();
    let o = ofbmlab(&["check-condition", "--config", &cfg, "--out", &out], None);
    assert_eq!(o.status.code(), Some(1));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["pass"], false);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"dimm": 2}"#,
        r#"{"D": [0.4, 0.0, 0.0, 0.8]}"#,
        r#"{"g": "missing-table.json"}"#,
        r#"{"replicates": 1}"#,
        "not json",
    ];
    for body in cases {
        let cfg = write_config(dir.path(), body);
        let o = ofbmlab(&["simulate-approx", "--config", &cfg], None);
        assert_eq!(o.status.code(), Some(2), "{body}");
    }
    let o = ofbmlab(&["simulate-approx", "--config", "/no/such/config.json"], None);
    assert_eq!(o.status.code(), Some(2));
    let o = ofbmlab(&["simulate-approx", "--band", "middle_2"], None);
    assert_eq!(o.status.code(), Some(2));
    let o = ofbmlab(&["no-such-command"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_ofbm_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"times": [0.0, 0.5, 1.0], "n_freq": 1024, "replicates": 20}"#,
    );
    let out = dir.path().join("o").to_string_lossy().into_owned();
    let o = ofbmlab(&["simulate-ofbm", "--config", &cfg, "--out", &out, "--seed", "5"], None);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("o/ofbm_paths.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("replicate,t,x1,x2"));
    assert_eq!(lines.count(), 60);
    let meta: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/ofbm_paths.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(meta["config"]["seed"], 5);
}

#[test]
fn simulate_approx_tail_band() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"n": 128, "times": [0.0, 1.0], "replicates": 10}"#);
    let out = dir.path().to_string_lossy().into_owned();
    let o = ofbmlab(
        &["simulate-approx", "--config", &cfg, "--out", &out, "--band", "tail_1"],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let meta: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("approx_paths.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["details"]["meta"]["band"], "tail_1");
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"n_list": [64, 256], "replicates": 60, "energy_samples": 40, "n_freq": 1024, "n": 128}"#,
    );
    let mut runs = Vec::new();
    for threads in ["1", "4", "4"] {
        let out = dir
            .path()
            .join(format!("t{}", runs.len()))
            .to_string_lossy()
            .into_owned();
        for cmd in ["converge", "simulate-approx", "simulate-ofbm"] {
            let o = ofbmlab(&[cmd, "--config", &cfg, "--out", &out], Some(threads));
            assert_eq!(o.status.code(), Some(0), "{cmd}");
        }
        let read = |f: &str| fs::read(Path::new(&out).join(f)).unwrap();
        runs.push((read("converge.csv"), read("approx_paths.csv"), read("ofbm_paths.csv")));
    }
    assert!(runs.iter().all(|r| *r == runs[0]));
    let csv = String::from_utf8(runs[0].0.clone()).unwrap();
    assert!(csv.starts_with("N,cov_frob_rel_err,tail_ratio,energy_stat,energy_pvalue,wall_seconds\n"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(',')));
}

#[test]
fn converge_timing_column_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"n_list": [64], "replicates": 30, "energy_samples": 20, "n_freq": 512}"#,
    );
    let out = dir.path().to_string_lossy().into_owned();
    let o = ofbmlab(
        &[
            "converge",
            "--timing",
            "--config",
            &cfg,
            "--out",
            &out,
            "--threads",
            "2",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("converge.csv")).unwrap();
    let last = csv.lines().nth(1).unwrap().rsplit(',').next().unwrap().to_string();
    assert!(last.parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn tightness_reports_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"g": "identity", "n": 256, "replicates": 400, "alpha": 1.0}"#,
    );
    let out = dir.path().to_string_lossy().into_owned();
    let o = ofbmlab(&["tightness", "--config", &cfg, "--out", &out], None);
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let pass = report["pass"].as_bool().unwrap();
    assert_eq!(o.status.code(), Some(if pass { 0 } else { 1 }));
    assert!(report["fit"]["slope"].as_f64().unwrap() > 0.5);
}

#[test]
fn quick_verify_writes_one_row_set_per_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let o = ofbmlab(&["verify", "--quick", "--out", &out], None);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().filter(|l| l.starts_with("criterion ")).collect();
    assert_eq!(lines.len(), 10);
    let all_pass = lines.iter().all(|l| l.contains(": PASS"));
    assert_eq!(o.status.code(), Some(if all_pass { 0 } else { 1 }));
    if !all_pass {
        let last: Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
        assert_eq!(last["status"], "fail");
    }
    let csv = fs::read_to_string(dir.path().join("acceptance.csv")).unwrap();
    for id in 1..=10 {
        assert!(csv.lines().any(|l| l.starts_with(&format!("{id},"))), "criterion {id}");
    }
    assert!(dir.path().join("acceptance.meta.json").is_file());
}
