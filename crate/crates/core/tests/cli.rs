//! Exit codes and artifacts of the `impulse` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models")
}

fn impulse(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impulse"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn model(name: &str) -> String {
    models().join(format!("{name}.toml")).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = impulse(&["solve", &model("m1")], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("lambda = -0.5") && stdout(&o).contains("r(f) = -0.5"));
    assert!(tmp.path().join("solution.json").exists());

    let o = impulse(&["solve", &model("m2")], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("degenerate = false"));
    let ladder = fs::read_to_string(tmp.path().join("ladder.csv")).unwrap();
    assert!(ladder.starts_with("m,k,lambda,residual,iterations\n"));
    assert_eq!(ladder.lines().count(), 4);

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "states = [\"a\"\n").unwrap();
    let o = impulse(&["solve", bad.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse error"));
}

#[test]
fn raw_rewards_are_reported_on_both_scales() {
    let tmp = tempfile::tempdir().unwrap();
    let o = impulse(&["solve", &model("raw_reward")], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let raw = impulse(&["solve", &model("m3")], &tmp.path().join("m3"));
    let lam = |o: &Output| -> f64 {
        stdout(o).lines().find_map(|l| l.strip_prefix("lambda = ")).unwrap().parse().unwrap()
    };
    // raw_reward is m3 with the running cost raised by exactly 1
    assert!((lam(&o) - lam(&raw) - 1.0).abs() < 1e-10);
    assert!(stdout(&o).contains("running cost offset = 1"));
}

#[test]
fn oracle_codes() {
    let tmp = tempfile::tempdir().unwrap();
    impulse(&["solve", &model("m2")], tmp.path());
    let o = impulse(&["oracle", &model("m2")], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("solve lambda"));
    let table = fs::read_to_string(tmp.path().join("oracle.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);

    let o = impulse(&["oracle", &model("m3"), "--level", "0", "--grid-k", "0"], tmp.path());
    assert_eq!(o.status.code(), Some(0));

    let o = impulse(&["oracle", &model("m3"), "--cap", "5"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cap"));

    let o = impulse(&["oracle", &model("m2"), "--oracle-tol=-1"], tmp.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn simulate_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = ["simulate", &model("m2"), "--trajectories", "2000", "--horizon", "20"];
    let o = impulse(&sim, tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run solve first"));


    impulse(&["solve", &model("m2")], tmp.path());
    let o = impulse(&sim, tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let exps = fs::read_to_string(tmp.path().join("exponents.csv")).unwrap();
    assert_eq!(exps.lines().count(), 2001);

    let never = impulse(&["simulate", &model("m1"), "--policy", "never", "--trajectories", "10", "--horizon", "10"], &tmp.path().join("m1"));
    assert!(stdout(&never).contains("J = -0.5 (stderr 0)"));

    let report = |dir: &Path| {
        Command::new(env!("CARGO_BIN_EXE_impulse")).arg("report").arg(dir).output().unwrap()
    };
    assert_eq!(report(tmp.path()).status.code(), Some(0));
    let names = [
        "report_lambda_ladder.csv",
        "report_j_ladder.csv",
        "report_w_profile.csv",
        "report_convergence.csv",
    ];
    let first: Vec<Vec<u8>> = names.iter().map(|n| fs::read(tmp.path().join(n)).unwrap()).collect();
    assert_eq!(report(tmp.path()).status.code(), Some(0));
    let second: Vec<Vec<u8>> = names.iter().map(|n| fs::read(tmp.path().join(n)).unwrap()).collect();
    assert_eq!(first, second);
    let j = String::from_utf8(first[1].clone()).unwrap();
    assert!(j.starts_with("horizon,point,stderr,lambda\n"));
    assert_eq!(j.lines().count(), 5);

    let empty = tempfile::tempdir().unwrap();
    assert_eq!(report(empty.path()).status.code(), Some(1));
}
