use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bures-gpca"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timings");
    v
}

#[test]
fn grid_report_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.json");
    let o = run(&[
        "grid",
        "--na",
        "3",
        "--nb",
        "3",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["experiment"], "grid");
    assert_eq!(r["config"]["seed"], 7);
    assert_eq!(r["config"]["dataset"]["na"], 3);
    assert!(r["results"]["improvement_pct"].as_f64().unwrap().abs() < 1e-6);
}

#[test]
fn reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        let o = run(&[
            "circle",
            "--n",
            "8",
            "--restarts",
            "3",
            "--seed",
            "5",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    assert_eq!(
        serde_json::to_string(&report(&a)).unwrap(),
        serde_json::to_string(&report(&b)).unwrap()
    );
}

#[test]
fn csv_tables_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("curve.csv");
    let o = run(&[
        "distortion-curve",
        "--ratios",
        "0.2,0.6",
        "--n",
        "8",
        "--format",
        "csv",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("ratio,tpca_cost,gpca_cost,improvement_pct,predicted_distortion"));
    assert_eq!(lines.count(), 2);

    let svg = dir.path().join("circle.svg");
    let o = run(&[
        "circle",
        "--n",
        "6",
        "--restarts",
        "2",
        "--plot",
        svg.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("index,tpca_score"));
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn fit_loads_user_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "dim=2\n2,0.1,0.1,1\n1.5,0,0,1.2\n1,-0.2,-0.2,2\n3,0.3,0.3,1\n").unwrap();
    let o = run(&["fit", data.to_str().unwrap(), "--components", "1", "--restarts", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["config"]["dataset"]["n"], 4);
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.json");
    fs::write(&data, r#"{"dim": 2, "matrices": [[1,0,0,1], [1,0,0,-1]]}"#).unwrap();
    let o = run(&["fit", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("matrix 1"));

    let data = dir.path().join("bad.csv");
    fs::write(&data, "dim=2\n1,0,0,1\n1,0,zz,1\n").unwrap();
    let o = run(&["fit", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3, field 3"));

    assert_eq!(run(&["circle", "--ratio", "1.5"]).status.code(), Some(2));
    assert_eq!(run(&["grid", "--restarts", "0"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn oracle_agrees_with_the_solver() {
    let o = run(&["oracle-1d", "--n", "10", "--angles", "500", "--offsets", "200"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["results"]["grid_agrees"], true);
    assert!(r["results"]["crosscheck"]["cost_gap"].as_f64().unwrap() < 1e-6);
}

#[test]
fn non_convergence_exits_3_with_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let o = run(&[
        "circle",
        "--max-iters",
        "1",
        "--restarts",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(report(&out)["results"]["converged"], false);
}
