use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_paramconvex"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn paramconvex")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_is_deterministic_and_passes() {
    let a = run(&["check", "--suite", "all", "--seed", "42"]);
    let b = run(&["check", "--suite", "all", "--seed", "42"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let reports: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let reports = reports.as_array().unwrap();
    assert!(reports.len() >= 8);
    assert!(reports.iter().all(|r| r["passed"] == true));
}

#[test]
fn check_single_suite() {
    let out = run(&["check", "--suite", "sandwich"]);
    assert!(out.status.success());
    let reports: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(reports[0]["name"], "sandwich");
}

#[test]
fn generate_train_solve() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let cfg = dir.path().join("train.cfg");
    let model = dir.path().join("model.json");
    let report = dir.path().join("report.json");

    let out = run(&["generate", "--n", "1", "--m", "2", "--points", "300", "--seed", "4", "--out", path(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&data).unwrap();
    assert_eq!(text.lines().next(), Some("x_1,u_1,u_2,y"));
    assert_eq!(text.lines().count(), 301);

    fs::write(&cfg, "epochs = 3\nbatch_size = 32\n").unwrap();
    let out = run(&[
        "train", "--data", path(&data), "--kind", "plse", "--config", path(&cfg), "--planes", "6",
        "--hidden", "16,16", "--model", path(&model), "--report", path(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep["train_loss"].as_array().unwrap().len(), 3);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(doc["kind"], "plse");
    assert_eq!((doc["n"].as_u64(), doc["m"].as_u64()), (Some(1), Some(2)));

    let out = run(&["solve", "--model", path(&model), "--x", "-0.3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let u = res["u_star"].as_array().unwrap();
    assert_eq!(u.len(), 2);
    assert!(u.iter().all(|v| v.as_f64().unwrap().abs() <= 1.0));
    assert_eq!(res["certified"], true);
    assert!(res["certificate"].as_f64().unwrap() >= 0.0);
}

#[test]
fn fnn_solve_reports_no_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let model = dir.path().join("fnn.json");
    assert!(run(&["generate", "--n", "1", "--m", "1", "--points", "100", "--out", path(&data)]).status.success());
    fs::write(dir.path().join("c.cfg"), "epochs = 1\n").unwrap();
    let out = run(&[
        "train", "--data", path(&data), "--kind", "fnn", "--config", path(&dir.path().join("c.cfg")),
        "--hidden", "8", "--model", path(&model),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["solve", "--model", path(&model), "--x", "0.2", "--restarts", "3"]);
    assert!(out.status.success());
    let res: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(res["certificate"].is_null());
    assert_eq!(res["certified"], false);
}

#[test]
fn tiny_benchmark_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.cfg");
    let out_dir = dir.path().join("out");
    fs::write(&cfg, "dims = 1x1\nkinds = plse,fnn\ndata_points = 200\nepochs = 2\nhidden = 8\nplanes = 4\nsurface_resolution = 5\n").unwrap();
    let out = run(&["benchmark", "--config", path(&cfg), "--out", path(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().next(), Some("kind,1x1_time,1x1_minimizer_error,1x1_value_error"));
    assert_eq!(csv.lines().count(), 3);
    for f in ["report.csv", "samples.json", "surface_target.csv", "surface_plse.csv", "models/plse_1x1.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let surface = fs::read_to_string(out_dir.join("surface_plse.csv")).unwrap();
    assert_eq!(surface.lines().count(), 26);
}

#[test]
fn errors_exit_with_two() {
    let out = run(&["solve", "--model", "/nonexistent/model.json", "--x", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "no_such_key = 1\n").unwrap();
    assert_eq!(run(&["benchmark", "--config", path(&bad)]).status.code(), Some(2));
}

#[test]
fn dimension_mismatch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let model = dir.path().join("m.json");
    assert!(run(&["generate", "--n", "2", "--m", "1", "--points", "50", "--out", path(&data)]).status.success());
    fs::write(dir.path().join("c.cfg"), "epochs = 1\n").unwrap();
    let trained = run(&[
        "train", "--data", path(&data), "--kind", "ma", "--config", path(&dir.path().join("c.cfg")),
        "--model", path(&model),
    ]);
    assert!(trained.status.success(), "{}", String::from_utf8_lossy(&trained.stderr));
    assert_eq!(run(&["solve", "--model", path(&model), "--x", "0.1"]).status.code(), Some(2));
}
