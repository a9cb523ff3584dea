use std::fs;
use std::process::{Command, Output};

fn nlhyp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlhyp")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines().skip(1).filter(|l| !l.starts_with('#')).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect()
}

#[test]
fn ball_energy_row() {
    let o = nlhyp(&["ball-energy", "--n", "2", "--alpha", "1", "--gamma", "1", "--radius", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("radius,volume,perimeter,nonlocal,total,error_estimate\n"));
    let row = &csv_rows(&text)[0];
    assert_eq!(row[0], 1.0);
    assert!((row[2] - 2.0 * std::f64::consts::PI * 1f64.sinh()).abs() < 1e-12);
    assert!((row[4] - row[2] - row[3]).abs() < 1e-12 * row[4]);
}

#[test]
fn zero_gamma_total_is_perimeter() {
    let o = nlhyp(&["ball-energy", "--gamma", "0", "--volume", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let row = &csv_rows(&stdout(&o))[0];
    assert_eq!(row[4], row[2]);
}

#[test]
fn unknown_flag_exits_two_and_names_it() {
    let o = nlhyp(&["ball-energy", "--radius", "1", "--bogus", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--bogus"));
}

#[test]
fn invalid_params_exit_two() {
    let o = nlhyp(&["--alpha", "3", "--n", "2", "ball-energy", "--radius", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpha"));
}

#[test]
fn numeric_failure_exits_one_with_json_line() {
    let o = nlhyp(&["ball-energy", "--radius", "-1"]);
    assert_eq!(o.status.code(), Some(1));
    let line: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(line["error"], "invalid-argument");
    assert!(line["message"].is_string());
}

#[test]
fn scan_has_one_sign_change() {
    let o = nlhyp(&["scan", "--m-min", "0.01", "--m-max", "1000", "--steps", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("m,radius,E_ball,E_split2,deficit,deficit_err\n"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 20);
    let changes = rows.windows(2).filter(|w| (w[0][4] < 0.0) != (w[1][4] < 0.0)).count();
    assert_eq!(changes, 1);
}

#[test]
fn reruns_are_byte_identical() {
    let args = ["--seed", "7", "minimize", "--volume", "0.5", "--grid", "32", "--max-iterations", "5"];
    let a = nlhyp(&args);
    let b = nlhyp(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let e = ["critical-volume", "--euclidean", "--n", "3", "--mc-samples", "20000"];
    assert_eq!(nlhyp(&e).stdout, nlhyp(&e).stdout);
}

#[test]
fn minimize_trace_and_snapshot_resume() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("g.csv");
    let snap_s = snap.to_str().unwrap();
    let o = nlhyp(&["minimize", "--volume", "0.5", "--grid", "32", "--max-iterations", "3", "--snapshot", snap_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("iter,energy,grad_norm,vol_drift\n"));
    assert!(text.lines().last().unwrap().starts_with("# termination="));
    let energies: Vec<f64> = csv_rows(&text).iter().map(|r| r[1]).collect();
    assert!(energies.windows(2).all(|w| w[1] <= w[0]));
    let snapshot = fs::read_to_string(&snap).unwrap();
    assert!(snapshot.lines().last().unwrap().starts_with("sha256="));

    let o = nlhyp(&["minimize", "--volume", "0.5", "--resume", snap_s, "--max-iterations", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = csv_rows(&stdout(&o))[0][1];
    let last = *energies.last().unwrap();
    // the resumed run builds its ball profile around the final graph, so only rounding may differ
    assert!((first - last).abs() <= 1e-12 * last, "{first} vs {last}");
    let again = dir.path().join("h.csv");
    let o = nlhyp(&["minimize", "--volume", "0.5", "--resume", snap_s, "--max-iterations", "0", "--snapshot", again.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let values = |t: &str| t.lines().filter(|l| !l.starts_with("sha256=")).skip(2).map(String::from).collect::<Vec<_>>();
    assert_eq!(values(&fs::read_to_string(&again).unwrap()), values(&snapshot));

    fs::write(&snap, snapshot.replacen(",0.", ",1.", 1)).unwrap();
    let o = nlhyp(&["minimize", "--volume", "0.5", "--resume", snap_s]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("format"));
}

#[test]
fn config_file_with_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# experiment\nalpha = 0.5\ngamma=2\nradius=0.7\n").unwrap();
    let cfg_s = cfg.to_str().unwrap();
    let via_config = nlhyp(&["ball-energy", "--config", cfg_s, "--alpha", "1.5"]);
    let direct = nlhyp(&["ball-energy", "--alpha", "1.5", "--gamma", "2", "--radius", "0.7"]);
    assert!(via_config.status.success(), "{}", stderr(&via_config));
    assert_eq!(via_config.stdout, direct.stdout);
    let from_file = nlhyp(&["ball-energy", "--config", cfg_s]);
    let direct = nlhyp(&["ball-energy", "--alpha", "0.5", "--gamma", "2", "--radius", "0.7"]);
    assert_eq!(from_file.stdout, direct.stdout);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ball.csv");
    let o = nlhyp(&["ball-energy", "--radius", "0.5", "--out", path.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert_eq!(fs::read_to_string(&path).unwrap(), stdout(&nlhyp(&["ball-energy", "--radius", "0.5"])));
}

#[test]
fn constants_json() {
    let o = nlhyp(&["constants", "--m-bar", "1"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in ["c3", "c5", "C4", "C5", "Lambda1", "Lambda2", "K", "epsilon", "c8"] {
        assert!(v[key].is_number(), "{key}");
    }
}

#[test]
fn critical_volume_hyperbolic_row() {
    let o = nlhyp(&["critical-volume"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let row = &csv_rows(&stdout(&o))[0];
    assert!(row[4] > row[3] && row[3] <= row[0] && row[0] <= row[4]);
    assert!(row[1].abs() <= row[2]);
}

#[test]
fn audit_list_and_unknown_check() {
    let o = nlhyp(&["audit", "--suite", "list"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 17);
    let o = nlhyp(&["audit", "--suite", "phi-distance,nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope"));
}

#[test]
fn audit_named_checks() {
    let o = nlhyp(&["audit", "--suite", "phi-distance, xi-concavity", "--pairs", "2000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let checks = v["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 2);
    assert_eq!(checks[0]["name"], "phi-distance");
    assert_eq!(checks[0]["samples"], 10000);
    assert_eq!(v["passed"], true);
}

#[test]
fn audit_all_passes() {
    let o = nlhyp(&["audit", "--suite", "all"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["checks"].as_array().unwrap().len(), 17);
    assert_eq!(v["params"]["n"], 2);
    assert_eq!(v["seed"], 0);
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}
