//! End-to-end runs of the `mobound` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mobound(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mobound")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three well separated classes along the first feature.
fn write_data(dir: &Path) -> PathBuf {
    let mut text = String::from("x1,x2,y\n");
    for i in 0..90 {
        let a = (i as f64 + 0.5) / 90.0;
        let b = ((i * 37) % 90) as f64 / 90.0;
        text.push_str(&format!("{a},{b},{}\n", 1 + i * 3 / 90));
    }
    let path = dir.join("data.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn train(dir: &Path, data: &Path, extra: &[&str], name: &str) -> PathBuf {
    let model = dir.join(name);
    let mut args = vec![
        "train",
        "--data",
        path_str(data),
        "--loss",
        "clip(logistic,B=3)",
        "--rounds",
        "15",
        "--leaves",
        "3",
        "--seed",
        "11",
        "--out",
        path_str(&model),
    ];
    args.extend_from_slice(extra);
    let out = mobound(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    model
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&mobound(&["--help"])), 0);
    assert_eq!(code(&mobound(&["--version"])), 0);
    assert_eq!(code(&mobound(&["train", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&mobound(&[])), 1);
    assert_eq!(code(&mobound(&["train", "--bogus"])), 1);
    assert_eq!(code(&mobound(&["check-loss", "--loss", "not_a_loss"])), 1);
    let out = mobound(&["check-loss", "--loss", "zero_one", "--trials", "10", "--seed", "1"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--lambda"));
}

#[test]
fn check_loss_logistic_passes() {
    let out = mobound(&["check-loss", "--loss", "logistic", "--q", "10", "--trials", "100000", "--seed", "7"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).lines().any(|l| l.starts_with("passed") && l.ends_with("true")));
}

#[test]
fn check_loss_reports_a_refuted_claim() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("check.json");
    let out = mobound(&[
        "check-loss", "--loss", "zero_one", "--lambda", "100", "--trials", "2000", "--seed", "3", "--out",
        path_str(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&report);
    assert_eq!(v["seed"], 3);
    assert_eq!(v["report"]["passed"], false);
    assert!(v["report"]["worst_case"].is_object());
}

#[test]
fn missing_seed_is_generated_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("check.json");
    let out = mobound(&["check-loss", "--loss", "logistic", "--trials", "50", "--out", path_str(&report)]);
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("generated seed"));
    assert!(json(&report)["seed"].is_u64());
}

#[test]
fn train_then_certify() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let model = train(dir.path(), &data, &[], "model.json");
    let m = json(&model);
    assert_eq!(m["ensemble"]["q"], 3);
    assert_eq!(m["train_config"]["seed"], 11);

    let cert = dir.path().join("cert.json");
    let out = mobound(&["certify", "--model", path_str(&model), "--data", path_str(&data), "--out", path_str(&cert)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let c = json(&cert);
    assert_eq!(c["model_hash"], m["content_hash"]);
    assert_eq!(c["constants"]["contraction"], 512.0);
    assert!(c["bound_explicit"].as_f64().unwrap() >= c["empirical_risk"].as_f64().unwrap());
    assert!(c["created"].is_string());
}

#[test]
fn zero_round_model_has_positive_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let model = train(dir.path(), &data, &["--rounds", "0"], "zero.json");
    let cert = dir.path().join("cert.json");
    let out = mobound(&["certify", "--model", path_str(&model), "--data", path_str(&data), "--out", path_str(&cert)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let c = json(&cert);
    assert!(c["gamma"].as_f64().unwrap() > 0.0);
    assert_eq!(c["inputs"]["rad_nq"], 0.0);
}

#[test]
fn unclipped_loss_cannot_be_certified() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let model = dir.path().join("m.json");
    let out = mobound(&[
        "train", "--data", path_str(&data), "--loss", "logistic", "--rounds", "3", "--seed", "1", "--out",
        path_str(&model),
    ]);
    assert_eq!(code(&out), 0);
    let out = mobound(&["certify", "--model", path_str(&model), "--data", path_str(&data)]);
    assert_eq!(code(&out), 3);
    let out = mobound(&[
        "certify", "--model", path_str(&model), "--data", path_str(&data), "--loss", "clip(logistic,B=2)",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn same_seed_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let a = train(dir.path(), &data, &[], "a.json");
    let b = train(dir.path(), &data, &[], "b.json");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let certs: Vec<serde_json::Value> = ["ca.json", "cb.json"]
        .iter()
        .map(|name| {
            let p = dir.path().join(name);
            let out = mobound(&["certify", "--model", path_str(&a), "--data", path_str(&data), "--out", path_str(&p)]);
            assert_eq!(code(&out), 0);
            let mut v = json(&p);
            v.as_object_mut().unwrap().remove("created");
            v
        })
        .collect();
    assert_eq!(certs[0], certs[1]);

    let single = Command::new(env!("CARGO_BIN_EXE_mobound"))
        .env("MOBOUND_THREADS", "1")
        .args([
            "train", "--data", path_str(&data), "--loss", "clip(logistic,B=3)", "--rounds", "15", "--leaves", "3",
            "--seed", "11", "--out", path_str(&dir.path().join("c.json")),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&single), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(dir.path().join("c.json")).unwrap());
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_mobound"))
        .env("MOBOUND_THREADS", "zero")
        .args(["check-loss", "--loss", "logistic", "--trials", "10", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "x,y\n").unwrap();
    let model = dir.path().join("m.json");
    let args = |data: &Path| {
        mobound(&[
            "train", "--data", path_str(data), "--loss", "logistic", "--schema", "multiclass:2", "--seed", "1",
            "--out", path_str(&model),
        ])
    };
    let out = args(&empty);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("no rows"));

    let zero = dir.path().join("zero.csv");
    std::fs::write(&zero, "x,y\n0.5,1\n0.1,0\n").unwrap();
    let out = args(&zero);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&args(&missing)), 2);
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let model = dir.path().join("cfg.json");
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "seed = 5\n[train]\ndata = \"{}\"\nloss = \"smooth_margin(rho=0.5)\"\nrounds = 4\nmin_samples_leaf = 2\nout = \"{}\"\n",
            data.display(),
            model.display()
        ),
    )
    .unwrap();
    let out = mobound(&["--config", path_str(&cfg), "train", "--rounds", "6"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let m = json(&model);
    assert_eq!(m["train_config"]["rounds"], 6);
    assert_eq!(m["train_config"]["min_samples_leaf"], 2);
    assert_eq!(m["train_config"]["seed"], 5);
    assert_eq!(m["ensemble"]["loss"], "smooth_margin(rho=0.5)");

    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let out = mobound(&["--config", path_str(&cfg), "check-loss", "--loss", "logistic"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn estimate_rad_for_stumps_and_models() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let report = dir.path().join("rad.json");
    let out = mobound(&[
        "estimate-rad", "--data", path_str(&data), "--schema", "multiclass:3", "--stumps", "--draws", "200", "--seed",
        "4", "--out", path_str(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = json(&report);
    let mean = r["estimate"]["mean"].as_f64().unwrap();
    assert!(mean > 0.0 && mean <= r["tree_class_bound"].as_f64().unwrap());

    let model = train(dir.path(), &data, &[], "model.json");
    let out = mobound(&[
        "estimate-rad", "--data", path_str(&data), "--model", path_str(&model), "--draws", "300", "--seed", "4",
        "--out", path_str(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = json(&report);
    assert!(r["estimate"]["mean"].as_f64().unwrap() <= r["tree_class_bound"].as_f64().unwrap());

    // Neither class selected.
    assert_eq!(code(&mobound(&["estimate-rad", "--data", path_str(&data)])), 1);
}

#[test]
fn minimax_writes_sweep_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("sweep.csv");
    let out = mobound(&[
        "minimax", "--n", "20,50", "--theta", "0,0.5", "--trials", "100", "--seed", "9", "--out", path_str(&csv_path),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "lambda,theta,n,kappa,learner,mean_risk,se,lower_envelope");
    assert_eq!(lines.count(), 12);

    assert_eq!(code(&mobound(&["minimax", "--n", "20", "--lambda", "0.5", "--seed", "1"])), 1);
}

#[test]
fn sweep_gamma_adds_columns_and_flags_domain_errors() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.csv");
    std::fs::write(&grid, "n,q,delta,lambda,theta,beta,B,rad_nq\n1000,5,0.05,2,0.5,1,1,0.01\n4000,5,0.05,2,0,1,1,0.005\n")
        .unwrap();
    let out_path = dir.path().join("gamma.csv");
    let out = mobound(&["sweep-gamma", "--grid-file", path_str(&grid), "--out", path_str(&out_path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut rdr = csv::Reader::from_path(&out_path).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), [
        "n", "q", "delta", "lambda", "theta", "beta", "B", "rad_nq", "gamma", "rhat", "r0"
    ]);
    assert_eq!(rdr.records().count(), 2);

    std::fs::write(&grid, "n,q,delta,lambda,theta,beta,B,rad_nq\n2,5,0.05,2,0.5,1,1,0.01\n").unwrap();
    let out = mobound(&["sweep-gamma", "--grid-file", path_str(&grid)]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));

    std::fs::write(&grid, "n,q\n100,2\n").unwrap();
    assert_eq!(code(&mobound(&["sweep-gamma", "--grid-file", path_str(&grid)])), 2);
}
