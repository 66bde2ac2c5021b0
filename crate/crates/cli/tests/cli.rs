use std::path::Path;
use std::process::{Command, Output};

fn podtransit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_podtransit")).args(args).current_dir(cwd).output().unwrap()
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

const TINY: &str = r#"{
  "network": {"n": 2, "active_lines": [0]},
  "demand": {"periods": 1, "peak": []},
  "params": {"T": 1, "K": 2, "h_min": 5, "h_max": 9, "l_max": 2}
}"#;

#[test]
fn solve_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = podtransit(&["solve", "--out", "run", "--seed", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["demand.csv", "solution.json", "metrics.csv"] {
        assert!(dir.path().join("run").join(f).exists(), "missing {f}");
    }
    let out = podtransit(&["sweep", "--param", "fleet_size", "--values", "50,150", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("run/sweep_fleet_size.csv").exists());
    let out = podtransit(&["report", "run"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("Average Headway (min)") && text.contains("Fleet Size"), "{text}");
}

#[test]
fn generate_and_export_write_files() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(podtransit(&["generate", "--out", "g"], dir.path()).status.code(), Some(0));
    assert!(dir.path().join("g/demand.csv").exists());
    assert_eq!(podtransit(&["export", "--out", "e"], dir.path()).status.code(), Some(0));
    let lp = std::fs::read_to_string(dir.path().join("e/model.lp")).unwrap();
    assert!(lp.contains("Subject To") && lp.trim_end().ends_with("End"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"params": {"F": 1}}"#);
    assert_eq!(podtransit(&["solve", "--config", &cfg, "--out", "x"], dir.path()).status.code(), Some(1));

    let cfg = write_config(dir.path(), r#"{"params": {"h_min": 20}}"#);
    assert_eq!(podtransit(&["solve", "--config", &cfg], dir.path()).status.code(), Some(2));
    assert_eq!(podtransit(&["solve", "--profile", "huge"], dir.path()).status.code(), Some(2));

    let cfg = write_config(dir.path(), r#"{"solver": {"node_limit": 0}}"#);
    let out = podtransit(&["solve", "--config", &cfg, "--out", "h"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("h/solution.json").exists());

    let out = podtransit(&["report", "nothing-here"], dir.path());
    assert_ne!(out.status.code(), Some(0));
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let out = podtransit(&["report", "empty"], dir.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no runs found"));
}

#[test]
fn oracle_on_a_tiny_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = podtransit(&["oracle", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("match"));
    // the desk profile is too large to enumerate
    assert_eq!(podtransit(&["oracle"], dir.path()).status.code(), Some(2));
}
