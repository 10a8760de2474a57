use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use preview_regret::cli::{exit_code, EXIT_ASSUMPTION, EXIT_BUDGET, EXIT_INPUT};
use preview_regret::io::read_versioned;
use preview_regret::polytope::HPolytope;
use preview_regret::Error;

const SCALAR: &str = r#"{"schema": 1, "scalar": {"a": 2, "x_bar": 10, "u_bar": 1, "d_bar": 0.5}}"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_preview-regret")).args(args).env("PREVIEW_REGRET_THREADS", "2").output().unwrap()
}

fn spec(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn interval(p: &HPolytope) -> (f64, f64) {
    let b = p.bounding_box().unwrap();
    (b.lower[0], b.upper[0])
}

fn column(csv_text: &str, name: &str) -> Vec<String> {
    let mut rd = csv::Reader::from_reader(csv_text.as_bytes());
    let idx = rd.headers().unwrap().iter().position(|h| h == name).unwrap();
    rd.records().map(|r| r.unwrap()[idx].to_string()).collect()
}

#[test]
fn rcis_of_the_scalar_example() {
    let dir = tempfile::tempdir().unwrap();
    let sys = spec(dir.path(), "s.json", SCALAR);
    let out = dir.path().join("a");
    let o = bin(&["rcis", &sys, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let set: HPolytope = read_versioned(&out.join("rcis.json")).unwrap();
    let (lo, hi) = interval(&set);
    assert!((lo + 0.5).abs() < 1e-9 && (hi - 0.5).abs() < 1e-9);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema"], 1);
    assert_eq!(summary["converged"], true);

    let out0 = dir.path().join("b");
    assert_eq!(bin(&["rcis", &sys, "--preview", "0", "--out", s(&out0)]).status.code(), Some(0));
    assert_eq!(fs::read(out.join("rcis.json")).unwrap(), fs::read(out0.join("rcis.json")).unwrap());

    let co = dir.path().join("c");
    assert_eq!(bin(&["rcis", &sys, "--collaborative", "--out", s(&co)]).status.code(), Some(0));
    let (lo, hi) = interval(&read_versioned(&co.join("rcis.json")).unwrap());
    assert!((lo + 1.5).abs() < 1e-9 && (hi - 1.5).abs() < 1e-9);
}

#[test]
fn malformed_input_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let bad = spec(dir.path(), "bad.json", "{\"schema\": 1,\n \"scalar\": {\"a\": }");
    let out = dir.path().join("out");
    let o = bin(&["rcis", &bad, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(EXIT_INPUT));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    assert!(!out.exists());
    let o = bin(&["regret", &bad, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(EXIT_INPUT));
    assert!(!out.exists());
    assert_eq!(bin(&["rcis"]).status.code(), Some(EXIT_INPUT));
}

#[test]
fn iteration_limit_is_a_budget_failure() {
    let dir = tempfile::tempdir().unwrap();
    let sys = spec(dir.path(), "r.json", r#"{"schema": 1, "random_2d": {"seed": 3}}"#);
    let o = bin(&["rcis", &sys, "--max-iter", "1", "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(EXIT_BUDGET));
}

#[test]
fn regret_curves_of_the_scalar_example() {
    let dir = tempfile::tempdir().unwrap();
    let sys = spec(dir.path(), "s.json", SCALAR);
    let out = dir.path().join("two");
    let o = bin(&["regret", &sys, "--p0", "1", "--p-max", "8", "--alg", "2", "--N", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("bounds.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, "p,true_dp,bound_alg1,bound_alg1_refined,bound_alg2,bound_alg3,bound_envelope,p_bar");
    for (i, b) in column(&text, "bound_alg2").iter().enumerate() {
        let p = i as i32 + 1;
        assert!((b.parse::<f64>().unwrap() - 0.5f64.powi(p)).abs() < 1e-9);
    }
    assert!(column(&text, "bound_alg1").iter().all(|c| c.is_empty()));
    // true d_p is only computed within the dimension budget
    let truth = column(&text, "true_dp");
    assert!(!truth[0].is_empty() && truth[7].is_empty());

    let out3 = dir.path().join("three");
    assert_eq!(bin(&["regret", &sys, "--p-max", "6", "--alg", "3", "--out", s(&out3)]).status.code(), Some(0));
    let text3 = fs::read_to_string(out3.join("bounds.csv")).unwrap();
    assert!(column(&text3, "p_bar").iter().all(|c| c == "inf"));
    for (t, l) in column(&text3, "true_dp").iter().zip(column(&text3, "bound_alg3")) {
        assert!((t.parse::<f64>().unwrap() - l.parse::<f64>().unwrap()).abs() < 1e-9);
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out3.join("algorithm3.json")).unwrap()).unwrap();
    assert_eq!(report["ladder"].as_array().unwrap().len(), 51);
}

#[test]
fn regret_runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let sys = spec(dir.path(), "r.json", r#"{"schema": 1, "random_2d": {"seed": 0}}"#);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = bin(&["regret", &sys, "--p-max", "4", "--N", "2,8", "--seed", "5", "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        (fs::read(out.join("bounds.csv")).unwrap(), fs::read(out.join("certificates.json")).unwrap())
    };
    assert_eq!(run("a"), run("b"));
    let certs: serde_json::Value = serde_json::from_slice(&run("c").1).unwrap();
    assert_eq!(certs["certificates"].as_array().unwrap().len(), 4);
}

#[test]
fn mpc_on_the_scalar_example() {
    let dir = tempfile::tempdir().unwrap();
    let sys = spec(dir.path(), "s.json", SCALAR);
    let term = spec(dir.path(), "c.json", &serde_json::to_string(&preview_regret::io::Versioned::new(HPolytope::interval(-0.5, 0.5))).unwrap());
    let out = dir.path().join("m");
    let o = bin(&["mpc", &sys, "--terminal", &term, "--p", "1", "--simulate", "50", "--streams", "100", "--x0", "0.3", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let fd: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("feasible_domain.json")).unwrap()).unwrap();
    let proj: HPolytope = serde_json::from_value(fd["projection"].clone()).unwrap();
    let (lo, hi) = interval(&proj);
    assert!((lo + 1.0).abs() < 1e-9 && (hi - 1.0).abs() < 1e-9);
    let sim: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("simulation.json")).unwrap()).unwrap();
    assert_eq!(sim["infeasible_steps"], 0);
    assert_eq!(sim["runs"], 100);
    assert!(out.join("trajectory_099.csv").exists());
    let conv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    for (g, b) in column(&conv, "gap").iter().zip(column(&conv, "bound")) {
        assert!(g.parse::<f64>().unwrap() <= b.parse::<f64>().unwrap() + 1e-9);
    }

    let auto = dir.path().join("auto");
    assert_eq!(bin(&["mpc", &sys, "--p", "1", "--out", s(&auto)]).status.code(), Some(0));
    let (lo, hi) = interval(&read_versioned(&auto.join("terminal.json")).unwrap());
    assert!((lo + 0.5).abs() < 1e-9 && (hi - 0.5).abs() < 1e-9);
}

#[test]
fn non_invariant_terminal_set_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let sys = spec(dir.path(), "s.json", SCALAR);
    let term = spec(dir.path(), "c.json", &serde_json::to_string(&preview_regret::io::Versioned::new(HPolytope::interval(-3.0, 3.0))).unwrap());
    let o = bin(&["mpc", &sys, "--terminal", &term, "--out", s(&dir.path().join("m"))]);
    assert_eq!(o.status.code(), Some(EXIT_INPUT));
    assert!(String::from_utf8_lossy(&o.stderr).contains("violating point [3.0]"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn demo_prints_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["demo-1d", "--p-max", "4", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("demo_1d.csv")).unwrap();
    for (c, t) in column(&text, "closed_form_dp").iter().zip(column(&text, "true_dp")) {
        assert!((c.parse::<f64>().unwrap() - t.parse::<f64>().unwrap()).abs() < 1e-9);
    }
    assert!(String::from_utf8_lossy(&o.stdout).contains("p_bar = inf"));
}

#[test]
fn error_classes_map_to_exit_codes() {
    assert_eq!(exit_code(&Error::InvalidInput("x".into())), EXIT_INPUT);
    assert_eq!(exit_code(&Error::NotInvariant { point: vec![0.0] }), EXIT_INPUT);
    assert_eq!(exit_code(&Error::AssumptionUnverifiable("x".into())), EXIT_ASSUMPTION);
    assert_eq!(exit_code(&Error::NotStabilizable), EXIT_ASSUMPTION);
    assert_eq!(exit_code(&Error::BudgetExceeded { dim: 9, budget: 8 }), EXIT_BUDGET);
}
