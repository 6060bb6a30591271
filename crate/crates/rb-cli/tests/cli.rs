//! End-to-end checks of the `rbmor` binary: reproducible outputs, idempotent
//! offline runs, output-root resolution, and exit codes.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rbmor"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, body).unwrap();
    path
}

const THERMAL: &str = r#"
[experiment]
name = "t"

[problem]
kind = "thermal_block"
cells = 6
lower = [0.5, 0.5]
upper = [2.0, 2.0]

[training]
kind = "grid"
n_per_dim = [4, 4]

[test]
n = 6
seed = 11

[sampling]
kind = "strong"
n_max = 4
tol = 1e-10
"#;

const HIER: &str = r#"
[experiment]
name = "h"

[problem]
kind = "helmholtz"
elements = 12
degree = 2
lower = [2.0]
upper = [4.0]

[training]
kind = "grid"
n_per_dim = [15]

[test]
n = 5
seed = 1

[sampling]
kind = "weak_hier"
n_max = 4
tol = 1e-9
theta_tol = 0.9
k_max = 3
"#;

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn report_files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
            matches!(ext, "csv" | "dat" | "rbx")
        })
        .collect();
    files.sort();
    files
}

#[test]
fn identical_configs_produce_byte_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t", THERMAL);
    let cfg_s = cfg.to_str().unwrap();
    for out in ["a", "b"] {
        let root = tmp.path().join(out);
        let root = root.to_str().unwrap();
        run_ok(&["offline", "--config", cfg_s, "--out", root]);
        run_ok(&["eval", "--config", cfg_s, "--out", root]);
    }
    let a = report_files(&tmp.path().join("a/t"));
    let b = report_files(&tmp.path().join("b/t"));
    assert!(!a.is_empty());
    assert_eq!(a.len(), b.len());
    for (fa, fb) in a.iter().zip(&b) {
        assert_eq!(fa.file_name(), fb.file_name());
        let ba = std::fs::read(fa).unwrap();
        let bb = std::fs::read(fb).unwrap();
        assert_eq!(ba, bb, "{} differs between reruns", fa.display());
    }
}

#[test]
fn offline_skips_existing_artifacts_unless_forced() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t", THERMAL);
    let cfg_s = cfg.to_str().unwrap();
    let root = tmp.path().join("out");
    let root_s = root.to_str().unwrap();
    let first = run_ok(&["offline", "--config", cfg_s, "--out", root_s]);
    assert!(first.contains("basis of dimension"), "unexpected: {first}");
    let second = run_ok(&["offline", "--config", cfg_s, "--out", root_s]);
    assert!(second.contains("already exist"), "unexpected: {second}");
    let forced = run_ok(&["offline", "--config", cfg_s, "--out", root_s, "--force"]);
    assert!(forced.contains("basis of dimension"), "unexpected: {forced}");
}

#[test]
fn hierarchical_pipeline_certifies_on_a_complex_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "h", HIER);
    let cfg_s = cfg.to_str().unwrap();
    let root = tmp.path().join("out");
    let root_s = root.to_str().unwrap();
    run_ok(&["offline", "--config", cfg_s, "--out", root_s]);
    run_ok(&["eval", "--config", cfg_s, "--out", root_s]);
    let theta = std::fs::read_to_string(root.join("h/theta_hier.csv")).unwrap();
    assert!(theta.lines().count() >= 2, "no saturation rows:\n{theta}");
    for line in theta.lines().skip(1) {
        assert!(line.ends_with("true"), "invalid saturation row: {line}");
    }
    let eval = std::fs::read_to_string(root.join("h/eval_hier.csv")).unwrap();
    // every certified bound on a mean row dominates the mean error
    for line in eval.lines().filter(|l| l.starts_with("mean")) {
        let cols: Vec<&str> = line.split(',').collect();
        let err: f64 = cols[2].parse().unwrap();
        let cert: f64 = cols[5].parse().unwrap();
        assert!(cert >= err, "certified bound below the error: {line}");
    }
}

#[test]
fn output_root_falls_back_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t", THERMAL);
    let root = tmp.path().join("env-root");
    let out = bin()
        .args(["offline", "--config", cfg.to_str().unwrap()])
        .env("RBMOR_OUT", &root)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(root.join("t/artifacts.rbx").exists());
}

#[test]
fn failures_map_to_documented_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "bad", "[experiment]\nname = \"x\"\nbogus = 1\n");
    let out = bin()
        .args(["offline", "--config", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));

    let cfg = write_config(tmp.path(), "t", THERMAL);
    let out = bin()
        .args(["eval", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("none").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("offline"), "unhelpful error: {msg}");
}
