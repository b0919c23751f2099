use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))
}

fn stlt(args: &[&str], dir: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_stlt")).args(args).current_dir(dir).env("RUST_LOG", "warn").output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn tree_writes_dot_and_time_codes() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario("example1_integrator");
    let (code, stdout, _) = stlt(&["tree", "--scenario", sc.to_str().unwrap(), "--out", "t"], tmp.path());
    assert_eq!(code, 0);
    assert!(stdout.contains("set nodes"));
    assert!(fs::read_to_string(tmp.path().join("t/tree.dot")).unwrap().starts_with("digraph"));
    let codes = fs::read_to_string(tmp.path().join("t/time_codes.csv")).unwrap();
    assert!(codes.lines().count() > 1);
}

#[test]
fn synth_then_monitor_agree() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario("example1_integrator");
    let (code, stdout, _) = stlt(&["synth", "--scenario", sc.to_str().unwrap()], tmp.path());
    assert_eq!(code, 0, "{stdout}");
    let out = tmp.path().join("out/example1_integrator");
    for f in ["run0.csv", "run1.csv", "run0_events.jsonl", "trajectories.svg", "verdicts.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("verdicts.json")).unwrap()).unwrap();
    assert_eq!(report["outcome"], "success");
    let margin = report["runs"][0]["verdict"]["margin"].as_f64().unwrap();
    let csv = out.join("run0.csv");
    let (code, stdout, _) = stlt(&["monitor", "--scenario", sc.to_str().unwrap(), "--trajectory", csv.to_str().unwrap()], tmp.path());
    assert_eq!(code, 0);
    let verdict: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(verdict["satisfied"], true);
    assert!((verdict["margin"].as_f64().unwrap() - margin).abs() < 1e-9);
}

#[test]
fn infeasible_branch_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(scenario("example1_integrator")).unwrap().replace("x0 = [[-6.0, 2.0], [-2.0, 3.5]]", "x0 = [[-20.0, -5.0]]");
    let path = tmp.path().join("far.toml");
    fs::write(&path, text).unwrap();
    let (code, stdout, _) = stlt(&["synth", "--scenario", path.to_str().unwrap(), "--branch", "1"], tmp.path());
    assert_eq!(code, 3, "{stdout}");
    let (code, _, _) = stlt(&["synth", "--scenario", path.to_str().unwrap(), "--branch", "0"], tmp.path());
    assert_eq!(code, 0);
}

#[test]
fn violating_trajectory_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("still.csv");
    let rows: String = (0..=500).map(|k| format!("{},-6,2\n", k as f64 * 0.05)).collect();
    fs::write(&csv, format!("t,x1,x2\n{rows}")).unwrap();
    let sc = scenario("example1_integrator");
    let (code, stdout, _) = stlt(&["monitor", "--scenario", sc.to_str().unwrap(), "--trajectory", csv.to_str().unwrap()], tmp.path());
    assert_eq!(code, 2, "{stdout}");
}

#[test]
fn bad_input_exits_with_four() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "schema = 1\nname = \"x\"\nformula = \"F[0,1] nope\"\n").unwrap();
    let (code, _, stderr) = stlt(&["tree", "--scenario", path.to_str().unwrap()], tmp.path());
    assert_eq!(code, 4);
    assert!(stderr.starts_with("error:"));
    let sc = scenario("example1_unicycle");
    let (code, _, stderr) = stlt(&["monitor", "--scenario", sc.to_str().unwrap(), "--trajectory", "missing.csv"], tmp.path());
    assert_eq!(code, 4);
    assert!(stderr.contains("missing.csv"));
}
