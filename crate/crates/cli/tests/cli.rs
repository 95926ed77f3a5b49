use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "scenario": "lingauss-verify",
  "params": {"model": "scalar"},
  "filters": [
    {"name": "SPF", "n": 20, "iterations": 5},
    {"name": "PF", "n": 20, "algorithm": {"particle": {"resample": true}}}
  ],
  "horizon": 6,
  "repeats": 2,
  "seed": 4
}"#;

fn spf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spf")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = spf(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["steps.csv", "timing.csv", "plot.csv", "summary.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let steps = fs::read_to_string(out.join("steps.csv")).unwrap();
    // Header plus repeats x filters x horizon rows.
    assert_eq!(steps.lines().count(), 1 + 2 * 2 * 6);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("SPF") && stdout.contains("PF"));
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let read = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["run", "--config", cfg.as_str(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert_eq!(spf(&args).status.code(), Some(0));
        fs::read(out.join("steps.csv")).unwrap()
    };
    let a = read("a", &[]);
    let b = read("b", &["--threads", "1"]);
    let c = read("c", &["--seed", "5"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn invalid_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = write_config(dir.path(), r#"{"scenario": "lingauss-verify", "filters": [], "horizon": 3, "bogus": 1}"#);
    assert_eq!(spf(&["run", "--config", &bad, "--out", out.to_str().unwrap()]).status.code(), Some(1));
    let missing = dir.path().join("nope.json");
    assert_eq!(
        spf(&["run", "--config", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.code(),
        Some(1)
    );
    assert_eq!(spf(&["check", "--suite", "nope"]).status.code(), Some(1));
}

#[test]
fn unwritable_output_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let file = dir.path().join("blocker");
    fs::write(&file, "").unwrap();
    let o = spf(&["run", "--config", &cfg, "--out", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_one_row_per_value_and_filter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("sweep");
    let o = spf(&[
        "sweep", "--config", &cfg, "--axis", "particle-count", "--values", "5,10", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("axis_value,filter,rmse_mean,rmse_std,q10,q90,ms_per_step"));
    assert_eq!(lines.count(), 4);
    // The dimension axis needs the sine-bank scenario.
    let o = spf(&["sweep", "--config", &cfg, "--axis", "dimension", "--values", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn resampling_check_passes() {
    let o = spf(&["check", "--suite", "resampling"]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().count() >= 4);
    assert!(stdout.lines().all(|l| l.starts_with("PASS ")));
}
