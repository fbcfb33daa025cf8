//! End-to-end tests of the binary: flag/file precedence, diagnostics for
//! bad configuration, and exit codes.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fbflow"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fbflow_cli_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn preset_flag_with_defaults_runs() {
    let dir = tmp_dir("defaults");
    let out = bin()
        .args([
            "ns",
            "--preset",
            "taylor-green",
            "--mode",
            "exact",
            "--resolution",
            "16",
            "--steps",
            "10",
            "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(dir.join("manifest.toml")).unwrap();
    assert!(manifest.contains("taylor_green_rel_error"));
}

#[test]
fn flag_overrides_config_file_and_is_recorded() {
    let dir = tmp_dir("precedence");
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        "[physics]\nnu = 0.3\nalpha = 1.0\n[grid]\ndim = 2\npoints_per_axis = 16\nperiod = 6.283185307179586\n[time]\nstart = 0.0\nhorizon = 1.0\nsteps = 10\n",
    )
    .unwrap();
    let out = bin()
        .args(["ns", "--config"])
        .arg(&cfg)
        .args(["--nu", "0.5", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(dir.join("manifest.toml")).unwrap();
    assert!(manifest.contains("nu = 0.5"), "flag must win over file:\n{manifest}");
}

#[test]
fn bad_config_exits_2_naming_the_key() {
    let out = bin().args(["ns", "--nu=-1.0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("physics.nu"), "diagnostic should name the key: {err}");

    let dir = tmp_dir("unknown_key");
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "bogus_key = 1\n").unwrap();
    let out = bin().args(["ns", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));
}

#[test]
fn solver_failure_exits_1() {
    let dir = tmp_dir("diverge");
    // one Picard iteration cannot reach a 1e-12 tolerance on a nonlinear run
    let out = bin()
        .args([
            "burgers",
            "--preset",
            "cole-hopf-1d",
            "--resolution",
            "64",
            "--steps",
            "20",
            "--max-iter",
            "1",
            "--tol",
            "1e-12",
            "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("residual"));
}
