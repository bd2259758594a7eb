use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn elastokin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elastokin"))
        .args(args)
        .env_remove("ELASTOKIN_THREADS")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn export(dir: &Path) -> std::path::PathBuf {
    let out = elastokin(&["export-model", "--out", s(dir), "--suite-size", "2", "--obstacles", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("model.json")
}

#[test]
fn export_writes_model_prior_and_problems() {
    let dir = tempfile::tempdir().unwrap();
    export(dir.path());
    for f in ["model.json", "prior.json", "problems.json", "truth_spec.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    assert_eq!(model["units"]["compliance"], "rad/kNm");
}

#[test]
fn noiseless_data_evaluates_to_zero_error_under_the_truth() {
    let dir = tempfile::tempdir().unwrap();
    let model = export(dir.path());
    let sim = dir.path().join("sim");
    let out = elastokin(&["simulate", "--model", s(&model), "--out", s(&sim), "--n", "25", "--sigma-m", "0", "--seed", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eval = dir.path().join("eval");
    let out = elastokin(&[
        "evaluate",
        "--model",
        s(&model),
        "--out",
        s(&eval),
        "--dataset",
        s(&sim.join("dataset.csv")),
        "--params",
        s(&sim.join("truth.json")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let row = stdout.lines().find(|l| l.starts_with("dataset")).unwrap();
    let cols: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(&cols[1..4], &["0.000", "0.000", "0.000"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(eval.join("evaluation.json")).unwrap()).unwrap();
    assert!(report["combined"]["max"].as_f64().unwrap() < 1e-9);
    assert!(eval.join("residuals.csv").is_file() && eval.join("histogram.csv").is_file());
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let model = export(dir.path());
    let run = |name: &str, seed: &str| {
        let out_dir = dir.path().join(name);
        let out = elastokin(&["simulate", "--model", s(&model), "--out", s(&out_dir), "--n", "30", "--split", "20", "--seed", seed]);
        assert!(out.status.success());
        out_dir
    };
    let (a, b, c) = (run("a", "9"), run("b", "9"), run("c", "10"));
    for f in ["dataset.csv", "train.csv", "test.csv", "truth.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("dataset.csv")).unwrap(), fs::read(c.join("dataset.csv")).unwrap());

    let poses = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = elastokin(&["select-poses", "--model", s(&model), "--out", s(&out_dir), "--n", "60", "--batch-size", "25", "--seed", "2"]);
        assert!(out.status.success());
        fs::read(out_dir.join("poses.csv")).unwrap()
    };
    assert_eq!(poses("p1"), poses("p2"));
}

#[test]
fn short_calibration_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let model = export(dir.path());
    let sim = dir.path().join("sim");
    let out = elastokin(&["simulate", "--model", s(&model), "--out", s(&sim), "--n", "40", "--split", "30", "--seed", "5"]);
    assert!(out.status.success());
    let cal = dir.path().join("cal");
    let out = elastokin(&[
        "calibrate",
        "--model",
        s(&model),
        "--out",
        s(&cal),
        "--dataset",
        s(&sim.join("train.csv")),
        "--test",
        s(&sim.join("test.csv")),
        "--starts",
        "1",
        "--groups",
        "closure,joint_offsets",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(cal.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["starts"].as_array().unwrap().len(), 1);
    assert!(report["test_error"]["combined"]["mean"].as_f64().unwrap() > 0.0);
}

#[test]
fn usage_and_input_errors_exit_with_one() {
    assert_eq!(elastokin(&["--help"]).status.code(), Some(0));
    assert_eq!(elastokin(&["no-such-command"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = elastokin(&["simulate", "--model", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("diagnostics.json").exists());
    let out = elastokin(&["evaluate", "--model", s(&missing), "--out", s(dir.path()), "--dataset", "x.csv", "--tol", "-1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_with_two_and_writes_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let model = export(dir.path());
    let sim = dir.path().join("sim");
    assert!(elastokin(&["simulate", "--model", s(&model), "--out", s(&sim), "--n", "5"]).status.success());
    let eval = dir.path().join("eval");
    let out = elastokin(&[
        "evaluate",
        "--model",
        s(&model),
        "--out",
        s(&eval),
        "--dataset",
        s(&sim.join("dataset.csv")),
        "--lambda",
        "1e-6",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(eval.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["detail"]["kind"], "equilibrium_not_converged");
    assert!(!diag["detail"]["trace"].as_array().unwrap().is_empty());
}
