use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_borninfeld"));
    c.env_remove("BORNINFELD_OUTPUT_ROOT");
    c
}

fn run(args: &[&str], root: &Path) -> Output {
    bin().arg("--output-dir").arg(root).args(args).output().expect("spawn")
}

fn schema(name: &str) -> Value {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(name);
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn assert_valid(schema_name: &str, path: &Path) {
    let doc: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema(schema_name)).unwrap();
    let errors: Vec<String> = validator.iter_errors(&doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{} violates {schema_name}: {errors:?}", path.display());
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = r#"
name = "small"
seed = 7

[grid]
kind = "lshape"
lower = [0.0, 0.0]
upper = [1.0, 1.0]
nodes = 17

[boundary]
kind = "affine"
slope = [0.3, -0.2]

[source]
density = "2 * exp(-20 * ((x - 0.3)^2 + (y - 0.3)^2))"

[init]
kind = "random"

[solver]
tolerance = 1e-9
"#;

#[test]
fn zero_builtin_converges_to_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["solve", "zero"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("zero");
    assert_valid("run-report.schema.json", &dir.join("report.json"));
    let r = report(&dir);
    assert_eq!(r["converged"], true);
    assert_eq!(r["max_sup_norm"], 0.0);
    assert!(dir.join("summary.txt").is_file());
    // Header, then only zero payload.
    let blob = fs::read(dir.join("solution.bin")).unwrap();
    assert!(blob.len() > 16 + 4 + 2 * 4 + 2 * 8);
    assert!(blob[blob.len() - 33 * 33 * 8..].iter().all(|b| *b == 0));
}

#[test]
fn radial_builtin_reports_the_oracle_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["solve", "radial-2d"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("radial-2d");
    assert_valid("run-report.schema.json", &dir.join("report.json"));
    let r = report(&dir);
    let rel = r["oracle"]["relative_linf_error"].as_f64().unwrap();
    assert!(rel < 0.05, "relative error {rel}");
    let ops: Vec<&str> = r["diagnostics"].as_array().unwrap().iter().map(|d| d["op"].as_str().unwrap()).collect();
    assert_eq!(ops, ["light_segments", "growth", "vi_audit", "energy_density"]);
    assert_eq!(r["diagnostics"][0]["summary"]["segments"], 0);
    assert!(dir.join("diag00_light_segments.csv").is_file());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("oracle       radial: relative Linf error"), "{stdout}");
}

#[test]
fn missing_grid_is_an_error_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(tmp.path(), "bad.toml", "name = \"bad\"\n[solver]\ntolerance = 1e-6\n");
    let out = run(&["solve", p.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing field `grid`"), "{err}");
}

#[test]
fn syntax_errors_report_line_and_column() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(tmp.path(), "bad.toml", "name = \"bad\"\n\n[grid]\nkind = \"box\"\nnodes = = 5\n");
    let out = run(&["solve", p.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml:5:"), "{err}");
}

#[test]
fn unknown_suite_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["suite", "no-such-suite"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown suite"));
}

#[test]
fn quanticharges_suite_passes_and_validates() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["suite", "quanticharges", "--deterministic"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_valid("suite-report.schema.json", &tmp.path().join("suites/quanticharges.json"));
}

#[test]
fn integrability_suite_passes_and_validates() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["suite", "counterexample-integrability"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_valid("suite-report.schema.json", &tmp.path().join("suites/counterexample-integrability.json"));
}

#[test]
fn deterministic_runs_are_bitwise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(tmp.path(), "small.toml", SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for root in [&a, &b] {
        let out = run(&["--deterministic", "solve", p.to_str().unwrap()], root);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let blob_a = fs::read(a.join("small/solution.bin")).unwrap();
    let blob_b = fs::read(b.join("small/solution.bin")).unwrap();
    assert_eq!(blob_a, blob_b);
    assert_valid("run-report.schema.json", &a.join("small/report.json"));
}

#[test]
fn env_var_sets_the_default_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .env("BORNINFELD_OUTPUT_ROOT", tmp.path())
        .args(["solve", "zero"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("zero/report.json").is_file());
}

#[test]
fn jobs_run_several_scenarios() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(tmp.path(), "small.toml", SMALL);
    let out = run(&["--jobs", "2", "solve", "zero", p.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("zero/solution.bin").is_file());
    assert!(tmp.path().join("small/solution.bin").is_file());
}

#[test]
fn iteration_cap_gives_exit_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace("tolerance = 1e-9", "tolerance = 1e-12\nmax_iterations = 20");
    let p = write(tmp.path(), "capped.toml", &text);
    let out = run(&["solve", p.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&tmp.path().join("small"));
    assert_eq!(r["status"], "not_converged");
}

#[test]
fn inadmissible_boundary_needs_allow_marginal() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "name = \"steep\"\n[grid]\nkind = \"box\"\nlower = [0.0, 0.0]\nupper = [1.0, 1.0]\nnodes = 9\n[boundary]\nkind = \"affine\"\nslope = [1.0, 0.0]\n";
    let p = write(tmp.path(), "steep.toml", text);
    let out = run(&["solve", p.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--allow-marginal"));
    let out = run(&["--allow-marginal", "solve", p.to_str().unwrap()], tmp.path());
    assert_ne!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn radial_oracle_table() {
    let out = bin().args(["oracle", "radial", "--points", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    // u(0) = int_0^1 (1 + r^2)^(-1/2) dr = asinh(1).
    assert!(text.contains(&format!("{:.10}", 1f64.asinh())), "{text}");
}

#[test]
fn counterexample_oracle_rejects_wrong_point_dimension() {
    let out = bin()
        .args(["oracle", "counterexample", "--scan", "1000", "--levels", "1", "--at", "0.1,0.2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
