use std::path::Path;
use std::process::{Command, Output};

fn range_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_range-sim")).args(args).output().expect("spawn range-sim")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const RUN: &str = r#"{
    "version": 1,
    "problem": {"kind": "linear_regression", "dim": 8, "samples": 80, "agents": 10,
                "radius": 10.0, "noise_std": 1.0},
    "regime": "SAA",
    "corruption": {"p_b": 0.05, "p_t": 0.2, "attack": {"kind": "directed_to_optimum"}},
    "algorithm": {"kind": "range", "gamma": 0.05, "window": 10, "alpha1": 0.3, "alpha2": 0.2},
    "iterations": 300,
    "cadence": 50,
    "trace_states": true
}"#;

#[test]
fn run_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", RUN);
    let out_dir = dir.path().join("out");
    let out = range_sim(&["run", "--config", &cfg, "--seed", "3", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["iterations_run"], 309);
    assert_eq!(summary["config_echo"]["seed"], 3);

    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("t,dist_sq,grad_norm,byz_count,z_fail,warmup"));
    // t = 0, every 50th iteration, and the last one
    assert_eq!(lines.count(), 1 + 6 + 1);
    assert_eq!(std::fs::read_to_string(out_dir.join("states.csv")).unwrap().lines().count(), 310);
    let timing: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("timing.json")).unwrap()).unwrap();
    assert!(timing["wall_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(range_sim(&["run", "--config", missing.to_str().unwrap(), "--out", "x"]).status.code(), Some(2));

    let unknown = write(dir.path(), "unknown.json", &RUN.replace("\"cadence\"", "\"cadense\""));
    assert_eq!(range_sim(&["run", "--config", &unknown, "--out", "x"]).status.code(), Some(2));

    let odd = write(dir.path(), "odd.json", &RUN.replace("\"alpha2\": 0.2", "\"alpha2\": 0.25"));
    let out = range_sim(&["run", "--config", &odd, "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha2"));
}

#[test]
fn plan_reports_and_flags_infeasible_windows() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(
        dir.path(),
        "plan.json",
        r#"{"version": 1,
            "bounds": {"m": 100, "n_agents": 10, "alpha1": 0.3, "alpha2": 0.3, "p_b": 0.025, "p_t": 0.1,
                       "kappa": 3.7}}"#,
    );
    let out = range_sim(&["plan", "--config", &plan]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("P_Z (binomial)"));
    assert!(text.contains("\"p_y\""));

    // alpha1 below the stationary Byzantine fraction 0.2
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"version": 1,
            "bounds": {"m": 100, "n_agents": 10, "alpha1": 0.1, "alpha2": 0.3, "p_b": 0.025, "p_t": 0.1}}"#,
    );
    let out = range_sim(&["plan", "--config", &bad]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().contains("n/a (alpha1 <= stationary Byzantine fraction)"));
}

#[test]
fn plan_rejects_an_invalid_chain() {
    let dir = tempfile::tempdir().unwrap();
    // the planner's chain needs p_b < p_t
    let plan = write(
        dir.path(),
        "plan.json",
        r#"{"version": 1,
            "bounds": {"m": 10, "n_agents": 10, "alpha1": 0.3, "alpha2": 0.3, "p_b": 0.3, "p_t": 0.2}}"#,
    );
    let out = range_sim(&["plan", "--config", &plan]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p_b < p_t"));
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let base: serde_json::Value = serde_json::from_str(RUN).unwrap();
    let grid = serde_json::json!({
        "version": 1,
        "base": base,
        "variants": [
            {"label": "narrow", "patch": {"algorithm": {"alpha2": 0.1}}},
            {"label": "wide", "patch": {"algorithm": {"alpha2": 0.3}}}
        ],
        "replicates": 2
    });
    let grid = write(dir.path(), "grid.json", &grid.to_string());
    let csv_path = dir.path().join("sweep.csv");
    let out = range_sim(&["sweep", "--grid", &grid, "--out", csv_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("narrow,2,2,0,"));
    assert!(rows[2].starts_with("wide,2,2,0,"));
}

#[test]
fn validate_bounds_reports_and_rejects_small_samples() {
    let dir = tempfile::tempdir().unwrap();
    let grid = write(
        dir.path(),
        "grid.json",
        r#"{"version": 1, "seed": 1, "tuples": [
            {"p_b": 0.1, "p_t": 0.3, "m": 10, "m0": 1, "alpha1": 0.3, "n_agents": 5, "alpha2": 0.2},
            {"p_b": 0.3, "p_t": 0.7, "m": 8, "m0": 2, "alpha1": 0.25, "n_agents": 4, "alpha2": 0.25}]}"#,
    );
    let report = dir.path().join("report.json");
    let out = range_sim(&[
        "validate-bounds",
        "--grid",
        &grid,
        "--samples",
        "20000",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8(out.stdout).unwrap().contains("all checks passed: true"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(json["tuples"].as_array().unwrap().len(), 2);

    assert_eq!(range_sim(&["validate-bounds", "--grid", &grid, "--samples", "100"]).status.code(), Some(2));
}
