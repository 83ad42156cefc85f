use std::path::Path;
use std::process::{Command, Output};

use doseslope::sim::dgp::gen_dgp1;
use doseslope::sim::io::{parse_report_csv, read_output, Output as Doc};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_doseslope"))
        .args(args)
        .output()
        .expect("spawn doseslope")
}

fn write_sample(path: &Path, n: usize) {
    let data = gen_dgp1(n, 2, 21).unwrap();
    let mut text = String::from("y,t,s1,s2\n");
    for i in 0..n {
        let s = data.covariates(i);
        text.push_str(&format!(
            "{},{},{},{}\n",
            data.outcomes()[i],
            data.treatments()[i],
            s[0],
            s[1]
        ));
    }
    std::fs::write(path, text).unwrap();
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for (seed, path) in [("1", &a), ("2", &b)] {
        let out = run(&[
            "simulate", "--n", "300", "--reps", "3", "--grid", "-1:1:5", "--seed", seed,
            "--format", "json", "--out", p(path),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let Doc::Simulation(report) = read_output(&a).unwrap() else {
        panic!("expected a simulation report");
    };
    assert_eq!(report.replications, 3);
    assert_eq!(report.grid.len(), 5);

    let out = run(&["report", p(&a), p(&b)]);
    assert_eq!(out.status.code(), Some(0));
    let rows = parse_report_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(rows.len(), 3 * 5);
}

#[test]
fn estimate_writes_a_curve_with_band() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    write_sample(&data, 400);
    let out = run(&[
        "estimate", "--data", p(&data), "--outcome", "y", "--treatment", "t",
        "--covariates", "s1,s2", "--band", "50", "--grid", "-1:1:9", "--format", "json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["kind"], "curve");
    assert_eq!(doc["method"], "theta_dr");
    let points = doc["points"].as_array().unwrap();
    assert_eq!(points.len(), 9);
    assert!(points.iter().all(|pt| pt["band_lower"].as_f64().unwrap() <= pt["band_upper"].as_f64().unwrap()));

    let csv = run(&[
        "estimate", "--data", p(&data), "--outcome", "y", "--treatment", "t",
        "--covariates", "s1,s2", "--method", "m_ipw", "--grid", "0:1:3",
    ]);
    assert_eq!(csv.status.code(), Some(0));
    assert_eq!(String::from_utf8(csv.stdout).unwrap().lines().count(), 4);
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    write_sample(&data, 50);
    let cases: [&[&str]; 4] = [
        &["simulate", "--dgp", "dgp9"],
        &["simulate", "--folds", "0", "--n", "100", "--reps", "1"],
        &["estimate", "--data", p(&data), "--outcome", "y", "--treatment", "missing", "--covariates", "s1"],
        &["estimate", "--data", "/no/such/file.csv", "--outcome", "y", "--treatment", "t", "--covariates", "s1"],
    ];
    for args in cases {
        let out = run(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn write_failure_exits_with_two() {
    let out = run(&[
        "simulate", "--n", "200", "--reps", "1", "--grid", "0:1:2", "--out", "/no/such/dir/out.csv",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn report_rejects_a_curve() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let curve = dir.path().join("curve.json");
    write_sample(&data, 200);
    let out = run(&[
        "estimate", "--data", p(&data), "--outcome", "y", "--treatment", "t",
        "--covariates", "s1,s2", "--format", "json", "--grid", "0:1:2", "--out", p(&curve),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(run(&["report", p(&curve)]).status.code(), Some(1));
}
