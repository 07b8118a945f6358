use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn majorant(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_majorant"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn summary(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("summary is JSON")
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn dominate_writes_ordered_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("oscillator_sinusoidal.toml");
    let out = majorant(&["dominate", path.to_str().unwrap()], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(summary(&out)["passed"], true);
    let rows = read_csv(&dir.path().join("domination.csv"));
    assert_eq!(rows[0], ["t", "x_norm", "y", "y_hat"]);
    assert!(rows.len() > 2000);
    for r in &rows[1..] {
        let v: Vec<f64> = r.iter().map(|s| s.parse().unwrap()).collect();
        assert!(v[1] <= v[2] + 1e-6 && v[2] <= v[3] + 1e-6, "{r:?}");
    }
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["max_violation"].is_number());
}

#[test]
fn swapped_columns_fail() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("oscillator_sinusoidal.toml");
    let out = majorant(
        &["dominate", path.to_str().unwrap(), "--swap-columns"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(summary(&out)["passed"], false);
}

#[test]
fn isotropic_columns_coincide() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("pure_isotropic.toml");
    let out = majorant(
        &["dominate", path.to_str().unwrap(), "--tol", "1e-9"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    for r in &read_csv(&dir.path().join("domination.csv"))[1..] {
        let (x, y): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        // rtol 1e-9, atol 1e-12 for each run
        assert!((x - y).abs() <= 1e-6 * y + 4e-12, "{r:?}");
    }
}

#[test]
fn region_emits_one_row_per_angle() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("cubic_separatrix.toml");
    let out = majorant(
        &["region", path.to_str().unwrap(), "--horizon", "10"],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = read_csv(&dir.path().join("boundary.csv"));
    assert_eq!(rows[0], ["theta", "radius", "log_radius", "flag"]);
    assert_eq!(rows.len(), 201);
    for r in &rows[1..] {
        let radius: f64 = r[1].parse().unwrap();
        let log_r: f64 = r[2].parse().unwrap();
        assert!((radius - 1.0).abs() <= 1e-2);
        assert!((log_r - radius.ln()).abs() < 1e-15);
        assert_eq!(r[3], "bracketed");
    }
    let disks = read_csv(&dir.path().join("disks.csv"));
    assert_eq!(disks[0], ["source", "radius"]);
    let sources: Vec<&str> = disks[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(sources, ["auxiliary", "majorant"]);
}

#[test]
fn region_of_a_linear_system_is_capped() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("linear_stable.toml");
    let out = majorant(
        &[
            "region",
            path.to_str().unwrap(),
            "--angle-step",
            "0.7853981633974483",
            "--horizon",
            "10",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let rows = read_csv(&dir.path().join("boundary.csv"));
    assert_eq!(rows.len(), 9);
    assert!(rows[1..]
        .iter()
        .all(|r| r[3] == "capped" && r[1] == "100.0"));
}

#[test]
fn region_output_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let path = scenario("cubic_separatrix.toml");
    let args = [
        "region",
        path.to_str().unwrap(),
        "--horizon",
        "10",
        "--angle-step",
        "0.3",
    ];
    majorant(&args, a.path());
    majorant(&args, b.path());
    for f in ["boundary.csv", "disks.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
}

#[test]
fn certify_reports_the_quadratic_root() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("quadratic.toml");
    let out = majorant(&["certify", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&out);
    assert_eq!(s["method"], "closed-form");
    assert!((s["verdict"]["certified_radius"].as_f64().unwrap() - 2.0).abs() < 1e-10);
    assert!(dir.path().join("certify.json").exists());
}

#[test]
fn certify_without_a_margin_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("unstable.toml");
    let out = majorant(
        &["certify", path.to_str().unwrap(), "--horizon", "10"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(
        majorant(&["dominate", missing.to_str().unwrap()], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(majorant(&["frobnicate"], dir.path()).status.code(), Some(2));
    let path = scenario("oscillator_sinusoidal.toml");
    assert_eq!(
        majorant(
            &["dominate", path.to_str().unwrap(), "--tol", "-1"],
            dir.path()
        )
        .status
        .code(),
        Some(2)
    );
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "t_end = 1.0\n[system]\nkind = \"pendulum\"\n").unwrap();
    assert_eq!(
        majorant(&["certify", bad.to_str().unwrap()], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn region_needs_a_planar_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("quadratic.toml");
    assert_eq!(
        majorant(&["region", path.to_str().unwrap()], dir.path())
            .status
            .code(),
        Some(2)
    );
}
