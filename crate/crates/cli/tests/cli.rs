use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lqvi::rhc::{read_iterations_csv, read_trace_json};
use lqvi::scenario::read_distance_velocity_csv;
use lqvi::solvers::{read_residual_csv, Algorithm};
use serde_json::Value;

fn lqvi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lqvi"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn sample() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("samples/scalar.json")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_sample() {
    let out = lqvi(&["solve", sample().to_str().unwrap(), "--tol", "1e-10"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["solution"][0].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(v["status"], "converged");
}

#[test]
fn solve_algorithms_agree() {
    let dir = tempfile::tempdir().unwrap();
    let mut sols = Vec::new();
    for algo in ["dr", "exgd"] {
        let path = dir.path().join(format!("{algo}.json"));
        let out = lqvi(&[
            "solve",
            sample().to_str().unwrap(),
            "--algo",
            algo,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        sols.push(json(&path)["solution"][0].as_f64().unwrap());
    }
    assert!((sols[0] - sols[1]).abs() < 1e-4);
}

#[test]
fn solve_usage_and_runtime_errors() {
    assert_eq!(lqvi(&["solve", "/nonexistent/problem.json"]).status.code(), Some(2));
    assert_eq!(lqvi(&["solve"]).status.code(), Some(2));
    assert_eq!(lqvi(&["bench", "--algos", "simplex"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let infeasible = dir.path().join("empty.json");
    std::fs::write(
        &infeasible,
        r#"{"n":1,"m":2,"M":[1.0],"q":[0.0],"D":[1.0,-1.0],"d":[1.0,1.0]}"#,
    )
    .unwrap();
    let out = lqvi(&["solve", infeasible.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["error"], "infeasible");

    let out = lqvi(&["solve", sample().to_str().unwrap(), "--max-iter", "2", "--tol", "1e-14"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["error"], "iter_limit");
}

#[test]
fn validate_reports_issues() {
    assert!(lqvi(&["validate", sample().to_str().unwrap()]).status.success());
    let dir = tempfile::tempdir().unwrap();
    let skew = dir.path().join("skew.json");
    std::fs::write(&skew, r#"{"n":2,"m":0,"M":[0.0,1.0,-1.0,0.0],"q":[0.0,0.0],"D":[],"d":[]}"#).unwrap();
    let out = lqvi(&["validate", skew.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["strongly_monotone"], false);

    let game = dir.path().join("game.json");
    std::fs::write(
        &game,
        r#"{"A":[[1.0]],"B":[[[1.0]]],"Q":[[[1.0]]],"R":[[[1.0]]],"Du":[[[1.0],[-1.0]]],"du":[-1.0,-1.0],"T":3}"#,
    )
    .unwrap();
    let out = lqvi(&["validate", game.to_str().unwrap(), "--kind", "game"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn bench_outputs_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = lqvi(&[
            "bench", "--seed", "7", "--instances", "2", "--n", "20", "--m", "5", "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv_a = std::fs::read(a.path().join("residuals.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.path().join("residuals.csv")).unwrap());
    assert_eq!(
        std::fs::read(a.path().join("summary.json")).unwrap(),
        std::fs::read(b.path().join("summary.json")).unwrap()
    );

    let rows = read_residual_csv(csv_a.as_slice()).unwrap();
    let mut groups: Vec<(Algorithm, usize)> = rows.iter().map(|r| (r.algorithm, r.instance_id)).collect();
    groups.dedup();
    assert_eq!(groups.len(), 2 * Algorithm::ALL.len());

    let summary = json(&a.path().join("summary.json"));
    for run in summary["runs"].as_array().unwrap() {
        if run["status"] == "converged" {
            assert!(run["final_residual"].as_f64().unwrap() <= 1e-3);
        }
    }
}

#[test]
fn crossroad_four_vehicles() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = lqvi(&[
        "crossroad", "--vehicles", "4", "--steps", "200", "--out-dir", d.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = read_trace_json(std::fs::File::open(d.join("trace.json")).unwrap()).unwrap();
    assert_eq!(trace.len(), 200);
    // margins are nonnegative up to the rounding of an active constraint
    assert!(trace.iter().flat_map(|r| &r.margins).all(|&m| m >= -1e-9));
    let its = read_iterations_csv(std::fs::File::open(d.join("iterations.csv")).unwrap()).unwrap();
    assert!(its[150..].iter().all(|r| r.iterations == 1));
    let dv = read_distance_velocity_csv(std::fs::File::open(d.join("distance_velocity.csv")).unwrap()).unwrap();
    assert_eq!(dv.len(), 201 * 4);
    assert!(dv.iter().filter(|r| r.agent == 0).all(|r| r.distance.is_none()));
}

#[test]
fn crossroad_zero_state() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = lqvi(&[
        "crossroad", "--vehicles", "3", "--steps", "10", "--x0", "zero", "--no-terminal-shortcut",
        "--out-dir", d.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let trace = read_trace_json(std::fs::File::open(d.join("trace.json")).unwrap()).unwrap();
    assert!(trace.iter().all(|r| r.x.iter().chain(&r.u).all(|&v| v == 0.0)));
    assert_eq!(lqvi(&["crossroad", "--vehicles", "0"]).status.code(), Some(2));
}
