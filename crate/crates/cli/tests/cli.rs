use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riccati-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_problem(dir: &Path, body: &str) -> String {
    let path = dir.join("problem.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn full_diagram_on_scalar_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("diagram.json");
    let o = lab(&["diagram", "all", "--problem", "scalar.json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["verdict"], "pass");
    assert_eq!(r["arrows"].as_array().unwrap().len(), 4);
    for arrow in ["left", "bottom", "top", "right"] {
        assert!(dir.path().join(format!("diagram.{arrow}.csv")).exists());
    }
}

#[test]
fn singular_weight_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_problem(
        dir.path(),
        r#"{"n": 1, "m": 1, "mode": "autonomous", "A": [[0.0]], "B": [[1.0]],
            "Q": [[0.0]], "R": [[1.0]], "horizon": "infinite"}"#,
    );
    let o = lab(&["solve-pare", "--problem", &problem]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("(H1)"));
}

#[test]
fn constants_for_scalar_benchmark() {
    let o = lab(&["constants", "--problem", "scalar"]);
    assert_eq!(o.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((r["hbar"].as_f64().unwrap() - 0.2).abs() < 1e-6);
    assert!((r["cbar"].as_f64().unwrap() - 4.21034).abs() < 1e-5);
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(lab(&["--bogus"]).status.code(), Some(64));
    assert_eq!(lab(&["diagram", "sideways", "--problem", "scalar"]).status.code(), Some(64));
    assert_eq!(lab(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_inputs_exit_2() {
    assert_eq!(lab(&["solve-pare"]).status.code(), Some(2));
    assert_eq!(lab(&["solve-pare", "--problem", "no-such-problem"]).status.code(), Some(2));
    assert_eq!(lab(&["solve-pare", "--problem", "scalar", "--tol-are", "0"]).status.code(), Some(2));
    assert_eq!(lab(&["simulate", "--problem", "scalar", "--x0", "1,2"]).status.code(), Some(2));
}

#[test]
fn reports_are_deterministic() {
    let args = ["simulate", "--problem", "double-integrator", "--T", "2", "--N", "20", "--x0", "1,-1"];
    let a = lab(&args);
    let b = lab(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let r: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(r["relative_gap"].as_f64().unwrap() < 1e-10);
}

#[test]
fn oracle_check_on_random_instances() {
    let o = lab(&["oracle-check", "--N", "8", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["seed"], 3);
    assert_eq!(r["instances"].as_array().unwrap().len(), 8);
}

#[test]
fn sampled_simulation_writes_trajectory_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.json");
    let o = lab(&["simulate", "--problem", "scalar", "--h", "0.1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("run.trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x_1,u_1,running_cost"));
    assert!(report(&out)["decay"]["decayed"].as_bool().unwrap());
}

#[test]
fn right_arrow_rejects_steps_above_threshold() {
    let o = lab(&["diagram", "right", "--problem", "scalar", "--h", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hbar"));
}

#[test]
fn shipped_problem_files_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems");
    for name in ["scalar", "double-integrator", "random3"] {
        let path = root.join(format!("{name}.json"));
        let o = lab(&["solve-pare", "--problem", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{name}");
    }
    let o = lab(&["solve-pare", "--problem", root.join("q_not_pd.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("(H1)"));
}
