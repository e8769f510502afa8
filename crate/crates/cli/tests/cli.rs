use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn odefit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_odefit"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn list_models_names_every_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = odefit(&["list-models"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    for name in ["linear_oscillator_2d", "cubic_oscillator_2d", "linear_3d", "van_der_pol", "lorenz"] {
        assert!(text.contains(name), "missing {name}");
    }
    assert!(text.contains("mu=1.5"));
}

#[test]
fn simulate_corrupt_estimate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = odefit(&["simulate", "--model", "van_der_pol", "--out", "clean.csv"], p);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let clean = fs::read_to_string(p.join("clean.csv")).unwrap();
    assert!(clean.starts_with("t,x1,x2\n"));
    assert_eq!(clean.lines().count(), 2502);

    let out = odefit(
        &[
            "corrupt", "--in", "clean.csv", "--noise", "white", "--level", "0.01", "--seed", "11", "--model",
            "van_der_pol", "--out", "noisy.csv",
        ],
        p,
    );
    assert_eq!(out.status.code(), Some(0));
    let noisy = fs::read_to_string(p.join("noisy.csv")).unwrap();
    assert!(noisy.starts_with("t,y1,y2\n"));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("noisy.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["model"], "van_der_pol");
    assert_eq!(meta["noise_kind"], "white_gaussian");
    assert_eq!(meta["seed"], 11);

    let out = odefit(
        &["estimate", "--model", "van_der_pol", "--data", "noisy.csv", "--start", "1.35", "--json"],
        p,
    );
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let mu = report["final_params"][0].as_f64().unwrap();
    assert!((mu - 1.5).abs() < 5e-3, "mu = {mu}");
    assert!(report["trace"].as_array().unwrap().len() > 1);

    let out = odefit(&["estimate", "--model", "van_der_pol", "--data", "noisy.csv"], p);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("termination:") && text.contains("mu"));
}

#[test]
fn corrupt_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    odefit(&["simulate", "--model", "linear_3d", "--t1", "2", "--out", "c.csv"], p);
    for name in ["a.csv", "b.csv"] {
        let out = odefit(&["corrupt", "--in", "c.csv", "--noise", "pink", "--level", "0.1", "--seed", "5", "--out", name], p);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(fs::read(p.join("a.csv")).unwrap(), fs::read(p.join("b.csv")).unwrap());
}

#[test]
fn negative_parameters_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = odefit(
        &["simulate", "--model", "linear_oscillator_2d", "--params", "-0.2,2,-2,-0.2", "--t1", "1", "--out", "s.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(dir.path().join("s.csv")).unwrap().lines().count(), 102);
}

#[test]
fn experiment_writes_tables_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(
        p.join("cfg.toml"),
        "model_name = \"linear_oscillator_2d\"\nrepetitions = 2\nnoise_levels = [0.01]\nnoise_kinds = [\"white_gaussian\", \"pink\"]\nbase_seed = 3\n",
    )
    .unwrap();
    let out = odefit(&["experiment", "--config", "cfg.toml", "--out", "res"], p);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["table.csv", "table.json", "table.txt", "runs.csv"] {
        assert!(p.join("res").join(f).exists(), "missing {f}");
    }
    let table = fs::read_to_string(p.join("res/table.csv")).unwrap();
    assert!(table.starts_with("noise_kind,noise_level,a,b,c,d,rmse,failures\n"));
    assert_eq!(table.lines().count(), 3);
    assert_eq!(fs::read_to_string(p.join("res/runs.csv")).unwrap().lines().count(), 5);

    let again = odefit(&["experiment", "--config", "cfg.toml", "--out", "res2"], p);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(
        fs::read(p.join("res/table.json")).unwrap(),
        fs::read(p.join("res2/table.json")).unwrap()
    );
}

#[test]
fn phase_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = odefit(&["phase", "--model", "lorenz", "--out", "ph.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("ph.csv")).unwrap();
    assert!(text.starts_with("t,x1,x2,x3\n"));
    assert_eq!(text.lines().count(), 2502);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(odefit(&["bogus"], p).status.code(), Some(1));
    assert_eq!(odefit(&["simulate", "--model", "lorenz"], p).status.code(), Some(1));
    assert_eq!(odefit(&["simulate", "--model", "nope", "--out", "x.csv"], p).status.code(), Some(1));
    assert_eq!(
        odefit(&["simulate", "--model", "lorenz", "--params", "1,2", "--out", "x.csv"], p).status.code(),
        Some(1)
    );
    assert_eq!(odefit(&["estimate", "--model", "lorenz", "--data", "missing.csv"], p).status.code(), Some(1));
    assert_eq!(odefit(&["--help"], p).status.code(), Some(0));
    assert_eq!(odefit(&["--version"], p).status.code(), Some(0));
}

#[test]
fn divergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = odefit(
        &["simulate", "--model", "lorenz", "--params", "10,28,1000", "--out", "x.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}
