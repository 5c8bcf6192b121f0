use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn qmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmm"))
        .args(args)
        .env("QMM_LOG", "error")
        .output()
        .expect("qmm runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

fn write_json(path: &Path, v: &Value) {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

fn two_point_problem(q: f64) -> Value {
    json!({"dimension": 1, "q": q, "target": {"dimension": 1, "atoms": [[-1.0, 0.5], [1.0, 0.5]]}})
}

fn config(dir: &Path, problem: Value, out: &str) -> std::path::PathBuf {
    let path = dir.join(format!("{out}.json"));
    write_json(&path, &json!({"schema": "qmm-config-v1", "problem": problem, "output": dir.join(out)}));
    path
}

fn solve_f1(dir: &Path) -> std::path::PathBuf {
    let cfg = config(dir, two_point_problem(2.0), "f1");
    let o = qmm(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    dir.join("f1")
}

#[test]
fn solve_f1_reports_whole_space_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), two_point_problem(2.0), "f1");
    let o = qmm(&["--json", "solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["converged"], json!(true));
    assert_eq!(v["verification_passed"], json!(true));
    let j = v["whole_space"]["J"].as_f64().unwrap();
    assert!((j + 2.0).abs() <= 5e-3, "J = {j}");
    for f in ["solution.json", "grid.csv", "verification.json"] {
        assert!(dir.path().join("f1").join(f).exists(), "{f}");
    }
}

#[test]
fn hyperplane_target_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let problem = json!({"dimension": 2, "q": 2.0,
        "target": {"dimension": 2, "atoms": [[-1.0, -1.0, 0.5], [1.0, 1.0, 0.5]]}});
    let cfg = config(dir.path(), problem, "flat");
    let o = qmm(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("hyperplane"));
}

#[test]
fn missing_and_malformed_configs_fail() {
    let dir = tempfile::tempdir().unwrap();
    let o = qmm(&["solve", "--config", dir.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(code(&o), 1);

    let path = dir.path().join("extra.json");
    write_json(&path, &json!({"schema": "qmm-config-v1", "problem": two_point_problem(2.0), "colour": "red"}));
    assert_eq!(code(&qmm(&["solve", "--config", path.to_str().unwrap()])), 1);

    write_json(&path, &json!({"schema": "qmm-config-v0", "problem": two_point_problem(2.0)}));
    let o = qmm(&["solve", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema"));
}

#[test]
fn nonconvergence_exits_two_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    let mut problem = two_point_problem(2.0);
    problem["solver"] = json!({"max_iterations": 1});
    let cfg = config(dir.path(), problem, "nc");
    let o = qmm(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(dir.path().join("nc/solution.json").exists());
    assert!(dir.path().join("nc/grid.csv").exists());
}

#[test]
fn verify_passes_on_f1_and_catches_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let sol = solve_f1(dir.path());
    let o = qmm(&["--json", "verify", sol.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let v = stdout_json(&o);
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["pass"] == json!(true)));

    // raise rho by 10% on the right half of the grid
    let csv = sol.join("grid.csv");
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    let mut out = format!("{}\n", lines.next().unwrap());
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let x: f64 = f[0].parse().unwrap();
        let mut rho: f64 = f[2].parse().unwrap();
        if x > 0.0 {
            rho *= 1.1;
        }
        out.push_str(&format!("{},{},{:?}\n", f[0], f[1], rho));
    }
    fs::write(&csv, out).unwrap();
    let o = qmm(&["verify", sol.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let table = String::from_utf8_lossy(&o.stdout);
    let line = table.lines().find(|l| l.starts_with("optimality residual")).unwrap();
    assert!(line.ends_with("FAIL"), "{line}");
}

#[test]
fn corrupt_solution_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("solution.json");
    fs::write(&path, "{\"schema\": \"qmm-solution-v1\", ").unwrap();
    assert_eq!(code(&qmm(&["verify", path.to_str().unwrap()])), 1);
}

#[test]
fn oracles_print_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let lp = dir.path().join("lp.json");
    let pair = json!({"dimension": 2, "atoms": [[1.0, 1.0, 0.5], [-1.0, -1.0, 0.5]]});
    write_json(&lp, &json!({"rho": pair, "mu": pair}));
    let o = qmm(&["oracle", "lp", lp.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["T"].as_f64().unwrap(), 2.0);

    let q = dir.path().join("q.json");
    let m = json!({"dimension": 1, "atoms": [[-3.0, 0.2], [0.0, 0.3], [2.0, 0.5]]});
    write_json(&q, &json!({"rho": m, "mu": m}));
    let o = qmm(&["oracle", "quantile1d", q.to_str().unwrap()]);
    let second_moment = 9.0 * 0.2 + 4.0 * 0.5;
    assert!((stdout_json(&o)["T"].as_f64().unwrap() - second_moment).abs() < 1e-12);

    let c = dir.path().join("c.json");
    write_json(&c, &json!({"mu": {"dimension": 1, "atoms": [[-1.0, 0.5], [1.0, 0.5]]}}));
    let o = qmm(&["oracle", "cmu", c.to_str().unwrap()]);
    assert!((stdout_json(&o)["c_mu"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    assert_eq!(code(&qmm(&["oracle", "simplex", c.to_str().unwrap()])), 1);
}

#[test]
fn hemisphere_exports_and_guards() {
    let dir = tempfile::tempdir().unwrap();
    let sol = solve_f1(dir.path());
    let out = dir.path().join("curve.obj");
    let o = qmm(&["--json", "hemisphere", sol.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert!(v["identity_error"].as_f64().unwrap() <= 1e-12);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().any(|l| l.starts_with("l 1 2")));

    let o = qmm(&["hemisphere", sol.to_str().unwrap(), "--out", out.to_str().unwrap(), "--format", "stl"]);
    assert_eq!(code(&o), 1);

    let cfg = config(dir.path(), two_point_problem(3.0), "q3");
    assert_eq!(code(&qmm(&["solve", "--config", cfg.to_str().unwrap()])), 0);
    let o = qmm(&["hemisphere", dir.path().join("q3").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("WrongExponent"));
}

#[test]
fn square_target_gives_a_surface_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let k = 5;
    let mut atoms = Vec::new();
    for i in 0..k {
        for j in 0..k {
            let w = |i: usize| if i == 0 || i + 1 == k { 0.5 } else { 1.0 };
            let s = |i: usize| -1.0 + 2.0 * i as f64 / (k - 1) as f64;
            atoms.push(vec![s(i), s(j), w(i) * w(j) / 16.0]);
        }
    }
    let problem = json!({"dimension": 2, "q": 2.0, "target": {"dimension": 2, "atoms": atoms},
        "grid": {"half_width": 12.0, "cells_per_axis": 64}});
    let path = dir.path().join("sq.json");
    write_json(&path, &json!({"schema": "qmm-config-v1", "problem": problem, "output": dir.path().join("sq"), "verify": false}));
    assert_eq!(code(&qmm(&["solve", "--config", path.to_str().unwrap()])), 0);
    let out = dir.path().join("sq.obj");
    let o = qmm(&["--json", "hemisphere", dir.path().join("sq").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert!(v["faces"].as_u64().unwrap() > 0);
    assert_eq!(v["local_convexity"]["consistent"], json!(true));
    assert!(v["anchor"]["polar_barycenter_norm"].as_f64().unwrap() <= 1e-6);
    assert!(v["anchor"]["coverage"].as_f64().unwrap() >= 0.99);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().any(|l| l.starts_with("f ")));
}

#[test]
fn solution_json_is_deterministic_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let cfg = config(dir.path(), two_point_problem(2.0), name);
        assert_eq!(code(&qmm(&["--seed", "7", "solve", "--config", cfg.to_str().unwrap()])), 0);
        let mut v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join(name).join("solution.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("timing");
        (v, fs::read(dir.path().join(name).join("grid.csv")).unwrap())
    };
    let (a, ga) = run("a");
    let (b, gb) = run("b");
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(ga, gb);
}
