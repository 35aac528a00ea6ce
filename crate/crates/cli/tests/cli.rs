//! End-to-end tests of the `maflow` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const CONFIG: &str = r#"
schema_version = 1
[grid]
n = 1
res = 16
[initial]
levels = 2
[initial.potential]
kind = "smooth"
modes = [{ amp = 0.02, k = [1, 0] }, { amp = 0.01, k = [1, 1], phase = 0.3 }]
[flow]
horizon = 0.05
[verify]
checks = ["sup_bound", "clef", "volume_identity"]
[output]
record_every = 20
snapshot_times = [0.025]
"#;

fn maflow(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maflow"))
        .arg("--output-root")
        .arg(root)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup(config: &str) -> (TempDir, PathBuf) {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("run.toml");
    fs::write(&path, config).unwrap();
    (tmp, path)
}

fn ok(o: &Output) {
    assert!(o.status.success(), "status {:?}\nstdout:\n{}\nstderr:\n{}", o.status, String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
}

fn snapshots(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".mafl"))
        .collect();
    v.sort();
    v
}

#[test]
fn run_then_verify_passes() {
    let (tmp, cfg) = setup(CONFIG);
    ok(&maflow(tmp.path(), &["run", cfg.to_str().unwrap(), "--out", "a"]));
    let dir = tmp.path().join("a");
    for j in [1, 2] {
        let l = dir.join(format!("level_{j}"));
        assert!(l.join("series.csv").exists());
        assert_eq!(snapshots(&l), ["snap_t0.000000000.mafl", "snap_t0.025000000.mafl", "snap_t0.050000000.mafl"]);
    }
    let o = maflow(tmp.path(), &["verify", "a"]);
    ok(&o);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("PASS") && !out.contains("FAIL"), "{out}");
    assert!(dir.join("verdicts.csv").exists());
}

#[test]
fn zero_horizon_writes_only_the_initial_snapshot() {
    let (tmp, cfg) = setup(&CONFIG.replace("horizon = 0.05", "horizon = 0.0").replace("snapshot_times = [0.025]", ""));
    ok(&maflow(tmp.path(), &["run", cfg.to_str().unwrap(), "--out", "z"]));
    let l = tmp.path().join("z/level_1");
    assert_eq!(snapshots(&l), ["snap_t0.000000000.mafl"]);
    let series = fs::read_to_string(l.join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 2);
}

#[test]
fn reruns_are_byte_identical() {
    let (tmp, cfg) = setup(CONFIG);
    ok(&maflow(tmp.path(), &["run", cfg.to_str().unwrap(), "--out", "a"]));
    ok(&maflow(tmp.path(), &["run", cfg.to_str().unwrap(), "--out", "b"]));
    for f in ["level_1/series.csv", "level_2/series.csv", "level_2/snap_t0.050000000.mafl"] {
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("b").join(f)).unwrap(), "{f}");
    }
    let o = maflow(tmp.path(), &["compare", "a", "b", "--out", "cmp.csv"]);
    ok(&o);
    let csv = fs::read_to_string(tmp.path().join("cmp.csv")).unwrap();
    let mut rows = csv.lines().skip(1).peekable();
    assert!(rows.peek().is_some());
    for row in rows {
        let sup: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(sup, 0.0, "{row}");
    }
}

#[test]
fn tampered_series_fails_verification() {
    let (tmp, cfg) = setup(CONFIG);
    ok(&maflow(tmp.path(), &["run", cfg.to_str().unwrap(), "--out", "a"]));
    let path = tmp.path().join("a/level_1/series.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = header.iter().position(|&h| h == "sup").unwrap();
    let last = lines.len() - 1;
    let mut cells: Vec<String> = lines[last].split(',').map(String::from).collect();
    let sup: f64 = cells[col].parse().unwrap();
    cells[col] = format!("{:e}", sup + 1.0);
    lines[last] = cells.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = maflow(tmp.path(), &["verify", "a", "--checks", "sup_bound"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL sup_bound"));
}

#[test]
fn config_errors_exit_2() {
    let (tmp, cfg) = setup(&CONFIG.replace("horizon = 0.05", "horizon = 0.05\nbogus = 1"));
    let o = maflow(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    let o = maflow(tmp.path(), &["verify", "missing"]);
    assert_eq!(o.status.code(), Some(2));
    let o = maflow(tmp.path(), &["run"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_3_with_report() {
    // The CFL step on this grid is about 1e-3.
    let bad = CONFIG.replace("horizon = 0.05", "horizon = 0.05\ndt_min = 0.01");
    let (tmp, cfg) = setup(&bad);
    let o = maflow(tmp.path(), &["run", cfg.to_str().unwrap(), "--out", "f"]);
    assert_eq!(o.status.code(), Some(3));
    let report = fs::read_to_string(tmp.path().join("f/failure.txt")).unwrap();
    assert!(report.starts_with("level 1:") && report.contains("failure time:"), "{report}");
    let bad = CONFIG.replace("amp = 0.02, k = [1, 0]", "amp = 0.5, k = [1, 0]");
    let (tmp, cfg) = setup(&bad);
    let o = maflow(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "data outside the cone is a config error");
}

#[test]
fn restart_continues_to_the_new_horizon() {
    let (tmp, cfg) = setup(CONFIG);
    ok(&maflow(tmp.path(), &["run", cfg.to_str().unwrap(), "--out", "a"]));
    ok(&maflow(tmp.path(), &["restart", "a", "--from", "0.025", "--horizon", "0.08", "--out", "r"]));
    let l = tmp.path().join("r/level_1");
    let snaps = snapshots(&l);
    assert_eq!(snaps.first().unwrap(), "snap_t0.025000000.mafl");
    assert_eq!(snaps.last().unwrap(), "snap_t0.080000000.mafl");
    ok(&maflow(tmp.path(), &["verify", "r", "--checks", "clef,volume_identity"]));
}

#[test]
fn oracles_write_their_outputs() {
    let tmp = TempDir::new().unwrap();
    let o = maflow(tmp.path(), &["oracle", "heat", "--res", "16", "--k", "1,0", "--times", "0,1", "--out", "h"]);
    ok(&o);
    let csv = fs::read_to_string(tmp.path().join("h/heat.csv")).unwrap();
    let amp: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    let expect = 1e-3 * (-std::f64::consts::PI.powi(2)).exp();
    assert_eq!(amp[0], 1e-3);
    assert!((amp[1] - expect).abs() < 1e-15);
    ok(&maflow(tmp.path(), &["oracle", "elliptic", "--res", "8", "--out", "e"]));
    assert!(tmp.path().join("e/elliptic_u.mafl").exists());
    ok(&maflow(tmp.path(), &["oracle", "lelong", "--res", "16", "--out", "l"]));
    assert!(tmp.path().join("l/lelong.mafl").exists());
    let o = maflow(tmp.path(), &["oracle", "heat", "--k", "1,0,0", "--out", "bad"]);
    assert_eq!(o.status.code(), Some(2));
}
