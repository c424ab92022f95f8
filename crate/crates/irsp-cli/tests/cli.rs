use std::path::Path;
use std::process::{Command, Output};

use irsp::network::mean_field;
use serde_json::Value;
use tempfile::TempDir;

const CONFIG: &str = r#"
[network]
kind = "file"
path = "w.csv"

[reinforcement]
c = 1.0
gamma = 1.0

[weights]
family = "constant"

[run]
horizon = 3000
replicas = 3
seed = 11
history = true

[verify]
sync_early = 20
tolerances = { mean = 0.15, var_lo = 0.7, var_hi = 1.3, ks = 0.1, cross = 0.2 }
"#;

fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("w.csv"), mean_field(3, 0.8).unwrap().to_csv()).unwrap();
    std::fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    dir
}

fn irsp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irsp")).current_dir(dir).env_remove("IRSP_OUT_DIR").args(args).output().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn covariance_reports_regime_and_fingerprint() {
    let dir = workspace();
    let out = irsp(dir.path(), &["covariance", "--config", "run.toml", "--out", "cov.json"]);
    assert_eq!(out.status.code(), Some(0));
    let rep = report(&out);
    assert_eq!(rep["fingerprint"].as_str().unwrap().len(), 64);
    assert_eq!(rep["seed"], 11);
    assert_eq!(rep["regime"]["rate_ntilde"], 0.5);
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("cov.json")).unwrap()).unwrap();
    assert_eq!(saved, rep);
}

#[test]
fn simulate_then_infer() {
    let dir = workspace();
    let out = irsp(dir.path(), &["simulate", "--config", "run.toml", "--out", "sim"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sim = dir.path().join("sim");
    let trajectory = std::fs::read_to_string(sim.join("replica_0.csv")).unwrap();
    let fp = report(&out)["fingerprint"].as_str().unwrap().to_string();
    assert!(trajectory.starts_with(&format!("# fingerprint={fp} seed=11 replica=0\nstep,agent,Z,Nw,X\n")));
    assert_eq!(trajectory.lines().count(), 2 + 3 * 3000);

    let ci = irsp(dir.path(), &["ci", "--data", "sim/actions_0.csv", "--config", "run.toml", "--level", "0.9"]);
    assert_eq!(ci.status.code(), Some(0), "{}", String::from_utf8_lossy(&ci.stderr));
    let interval = &report(&ci)["interval"];
    let (lo, hi, center) = (interval["lo"].as_f64().unwrap(), interval["hi"].as_f64().unwrap(), interval["center"].as_f64().unwrap());
    assert!(lo < center && center < hi && interval["n"] == 3000);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(sim.join("summary.json")).unwrap()).unwrap();
    assert!((summary["summary"][0]["ntilde"][0].as_f64().unwrap() - center).abs() < 1e-12);

    let test = irsp(dir.path(), &["test-w", "--data", "sim/actions_0.csv", "--w", "w.csv", "--config", "run.toml"]);
    assert_eq!(test.status.code(), Some(0), "{}", String::from_utf8_lossy(&test.stderr));
    let rep = report(&test);
    assert_eq!(rep["test"]["dof"], 2);
    assert!((0.0..=1.0).contains(&rep["test"]["p_value"].as_f64().unwrap()));
}

#[test]
fn outputs_do_not_depend_on_threads() {
    let dir = workspace();
    for (threads, sub) in [("1", "a"), ("3", "b")] {
        let out = irsp(dir.path(), &["--threads", threads, "simulate", "--config", "run.toml", "--replicas", "5", "--out", sub]);
        assert_eq!(out.status.code(), Some(0));
    }
    for name in ["summary.json", "replica_0.csv", "replica_4.csv", "actions_2.csv"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn environment_overrides_output_dir() {
    let dir = workspace();
    let target = dir.path().join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_irsp"))
        .current_dir(dir.path())
        .env("IRSP_OUT_DIR", &target)
        .args(["lemmas", "--suite", "products", "--out", "ignored/lemmas.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(target.join("lemmas.json").exists());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn verify_clt_exit_status_follows_checks() {
    let dir = workspace();
    let pass = irsp(dir.path(), &["--threads", "1", "verify-clt", "--config", "run.toml", "--replicas", "400", "--horizon", "2000"]);
    let rep = report(&pass);
    assert_eq!(pass.status.code(), Some(0), "{rep:#}");
    assert_eq!(rep["passed"], true);

    let strict = CONFIG.replace("ks = 0.1", "ks = 0.000001");
    std::fs::write(dir.path().join("strict.toml"), strict).unwrap();
    let fail = irsp(dir.path(), &["verify-clt", "--config", "strict.toml", "--replicas", "50", "--horizon", "500"]);
    assert_eq!(fail.status.code(), Some(1));
    assert_eq!(report(&fail)["passed"], false);
}

#[test]
fn invalid_inputs_exit_with_errors() {
    let dir = workspace();
    std::fs::write(dir.path().join("bad.toml"), CONFIG.replace("gamma = 1.0", "gamma = 0.3")).unwrap();
    std::fs::write(dir.path().join("bad.csv"), "0.5,0.5\n0.6,0.5\n").unwrap();
    for args in [
        &["covariance", "--config", "bad.toml"][..],
        &["covariance", "--config", "missing.toml"],
        &["validate-network", "bad.csv"],
        &["lemmas", "--suite", "nope"],
        &["ci", "--data", "w.csv", "--config", "run.toml"],
    ] {
        let out = irsp(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
    let ok = irsp(dir.path(), &["validate-network", "w.csv"]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(report(&ok)["spectral"]["n_agents"], 3);
}
