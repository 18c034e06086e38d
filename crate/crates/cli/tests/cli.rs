use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn trifield(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trifield"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn envs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/envs")
}

fn env_path(name: &str) -> String {
    envs().join(name).to_str().unwrap().to_owned()
}

const ANNULUS: &str = r#"{
  "workspace": [[0,0],[4,0],[4,4],[0,4]],
  "obstacles": [[[1.5,1.5],[2.5,1.5],[2.5,2.5],[1.5,2.5]]],
  "goal": [0.5, 0.5]
}"#;

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn mesh_then_field_then_simulate_reaches_goal_on_bundled_envs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("exp1.json"),
        r#"{"start": [1.0, 1.0, 3.0], "t_max": 300,
            "controller": {"v_max": 1.0, "omega_max": 1.0, "k": 1.0, "eps_v": 0.7853981633974483}}"#,
    )
    .unwrap();
    for env in ["cluttered.json", "corridor.json"] {
        let env = env_path(env);
        assert!(trifield(d, &["mesh", "--env", &env, "--out", "m.json"]).status.success());
        let out = trifield(d, &["field", "--env", &env, "--mesh", "m.json", "--method", "qp", "--out", "f.json"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let out = trifield(d, &["simulate", "--env", &env, "--field", "f.json", "--config", "exp1.json", "--out", "run"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(json(&d.join("run/summary.json"))["outcome"], "GOAL");
        let csv = std::fs::read_to_string(d.join("run/trajectory.csv")).unwrap();
        assert!(csv.starts_with("t,x,y,theta,v,omega,phi,theta_d,cell,saturated\n"));
    }
}

#[test]
fn malformed_environment_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{ not json").unwrap();
    let out = trifield(dir.path(), &["mesh", "--env", "bad.json", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse"));
}

#[test]
fn goal_in_obstacle_exits_3_with_report() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("e.json"), ANNULUS.replace("[0.5, 0.5]", "[2, 2]")).unwrap();
    let out = trifield(dir.path(), &["mesh", "--env", "e.json", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("goal"));
}

#[test]
fn missing_input_and_unknown_method_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = trifield(dir.path(), &["mesh", "--env", "nope.json", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
    let env = env_path("cluttered.json");
    let out = trifield(dir.path(), &["field", "--env", &env, "--method", "magic", "--out", "f.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = trifield(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn annulus_fields_echo_box_and_method() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("e.json"), ANNULUS).unwrap();
    assert!(trifield(d, &["mesh", "--env", "e.json", "--out", "m.json"]).status.success());
    assert_eq!(json(&d.join("m.json"))["triangles"].as_array().unwrap().len(), 8);
    assert!(trifield(d, &["field", "--env", "e.json", "--method", "qp", "--out", "q.json"]).status.success());
    let q = json(&d.join("q.json"));
    let alpha: Vec<f64> = q["alpha"].as_array().unwrap().iter().filter_map(|a| a.as_f64()).collect();
    assert_eq!(alpha.len(), 7);
    assert!(alpha.iter().all(|a| (0.0..=1.0).contains(a)));
    assert!(trifield(d, &["field", "--env", "e.json", "--method", "baseline", "--out", "b.json"]).status.success());
    let b = json(&d.join("b.json"));
    assert!(b.get("alpha").is_none());
    assert_eq!(b["cell_vectors"].as_array().unwrap().len(), 8);
}

#[test]
fn simulate_reports_start_in_obstacle_and_timeout() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("e.json"), ANNULUS).unwrap();
    assert!(trifield(d, &["field", "--env", "e.json", "--out", "f.json"]).status.success());
    std::fs::write(d.join("inside.json"), r#"{"start": [2, 2, 0]}"#).unwrap();
    let out = trifield(d, &["simulate", "--env", "e.json", "--field", "f.json", "--config", "inside.json", "--out", "r"]);
    assert_eq!(out.status.code(), Some(3));
    std::fs::write(d.join("short.json"), r#"{"start": [3.5, 3.5, 0], "t_max": 0.01}"#).unwrap();
    let out = trifield(d, &["simulate", "--env", "e.json", "--field", "f.json", "--config", "short.json", "--out", "r"]);
    assert!(out.status.success());
    assert_eq!(json(&d.join("r/summary.json"))["outcome"], "TIMEOUT");
    std::fs::write(d.join("bad.json"), r#"{"start": [3.5, 3.5, 0], "dt": 0}"#).unwrap();
    let out = trifield(d, &["simulate", "--env", "e.json", "--field", "f.json", "--config", "bad.json", "--out", "r"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sample_field_grid_is_free_and_unit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("e.json"), ANNULUS).unwrap();
    assert!(trifield(d, &["field", "--env", "e.json", "--out", "f.json"]).status.success());
    assert!(trifield(d, &["sample-field", "--env", "e.json", "--field", "f.json", "--grid-n", "0", "--out", "g0.csv"])
        .status
        .success());
    assert_eq!(std::fs::read_to_string(d.join("g0.csv")).unwrap(), "x,y,Vx,Vy,theta_d,cell\n");
    assert!(trifield(d, &["sample-field", "--env", "e.json", "--field", "f.json", "--grid-n", "20", "--out", "g.csv"])
        .status
        .success());
    let csv = std::fs::read_to_string(d.join("g.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(rows.len() > 300);
    for r in rows {
        let inside_hole = [r[0], r[1]].iter().all(|&c| c > 1.5 && c < 2.5);
        assert!(!inside_hole);
        assert!((r[2].hypot(r[3]) - 1.0).abs() < 1e-9);
    }
}

#[test]
fn compare_reports_table_structure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let env = env_path("cluttered.json");
    let out = trifield(d, &["compare", "--env", &env, "--n", "1", "--seed", "3", "--out", "one.json"]);
    assert!(out.status.success());
    let report = json(&d.join("one.json"));
    let metrics = report["metrics"].as_array().unwrap();
    let names: Vec<&str> = metrics.iter().map(|m| m["metric"].as_str().unwrap()).collect();
    assert_eq!(names, ["total_bending", "total_turning", "path_length", "max_curvature"]);
    for m in metrics {
        let w = m["rows"][0]["win_rate_pct"].as_f64().unwrap();
        assert!([0.0, 50.0, 100.0].contains(&w));
    }
    let out = trifield(d, &["compare", "--env", &env, "--n", "5", "--mode", "closedloop", "--out", "cl.json"]);
    assert!(out.status.success());
    assert_eq!(json(&d.join("cl.json"))["metrics"].as_array().unwrap().len(), 5);
}

#[test]
fn trace_writes_polyline_to_goal() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("e.json"), ANNULUS).unwrap();
    assert!(trifield(d, &["field", "--env", "e.json", "--out", "f.json"]).status.success());
    let out = trifield(d, &["trace", "--env", "e.json", "--field", "f.json", "--start", "3.5,3.5", "--out", "c.csv"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("GOAL"));
    let out = trifield(d, &["trace", "--env", "e.json", "--field", "f.json", "--start", "3.5", "--out", "c.csv"]);
    assert_eq!(out.status.code(), Some(2));
}
