//! One function per subcommand. Each returns the JSON report and whether every check passed.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use irsp::asymptotics::{self, mean_field as mf, CovarianceSpec, Params};
use irsp::inference::{self, ActionRecord};
use irsp::network::{check_clt_assumptions, parse_network_csv, spectral_decompose, validate_network, SpectralData, WeightedNetwork};
use irsp::numerics;
use irsp::simulator::{run_ensemble, SimSetup};
use irsp::verify::{self, VerifyOptions};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{load_config, output_dir, RunConfig, OUT_DIR_ENV};

/// A finished command: the report and the overall verdict.
#[derive(Debug)]
pub struct Outcome {
    pub report: Value,
    pub passed: bool,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Where a single-file report goes: the environment directory keeps the file name.
fn report_path(out: Option<&Path>, default_name: &str) -> Option<PathBuf> {
    let env_dir = std::env::var(OUT_DIR_ENV).ok().filter(|d| !d.is_empty());
    match (env_dir, out) {
        (Some(dir), Some(o)) => Some(Path::new(&dir).join(o.file_name().unwrap_or(default_name.as_ref()))),
        (Some(dir), None) => Some(Path::new(&dir).join(default_name)),
        (None, o) => o.map(Path::to_path_buf),
    }
}

fn emit(report: Value, passed: bool, out: Option<&Path>, default_name: &str) -> Result<Outcome> {
    if let Some(path) = report_path(out, default_name) {
        write_file(&path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    Ok(Outcome { report, passed })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_network(path: &Path) -> Result<WeightedNetwork> {
    let raw = parse_network_csv(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    validate_network(raw).with_context(|| format!("validating {}", path.display()))
}

fn load_actions(path: &Path) -> Result<ActionRecord> {
    inference::parse_actions_csv(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

struct Loaded {
    cfg: RunConfig,
    net: WeightedNetwork,
    spec: SpectralData,
    params: Params,
}

fn load(config: &Path, network_override: Option<&Path>) -> Result<Loaded> {
    let (cfg, base) = load_config(config).with_context(|| format!("loading {}", config.display()))?;
    let net = match network_override {
        Some(path) => load_network(path)?,
        None => cfg.network(&base)?,
    };
    let spec = spectral_decompose(&net)?;
    let params = cfg.params()?;
    Ok(Loaded { cfg, net, spec, params })
}

/// Simulate the configured ensemble; writes one trajectory CSV per replica and `summary.json`.
pub fn simulate(config: &Path, replicas: Option<usize>, seed: Option<u64>, out: Option<&Path>, threads: Option<usize>) -> Result<Outcome> {
    let Loaded { mut cfg, net, spec, .. } = load(config, None)?;
    if let Some(r) = replicas {
        if r == 0 {
            bail!("--replicas must be positive");
        }
        cfg.run.replicas = r;
    }
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    let fingerprint = cfg.fingerprint();
    let dir = output_dir(out, Some(&cfg));
    let n = net.n_agents();
    let (r, w) = cfg.schedules()?;
    let checkpoints = cfg.checkpoints();
    let setup = SimSetup::new(net, r, w, cfg.run.horizon);
    let init = cfg.run.init.to_mode(n);
    let ens = run_ensemble(&setup, &spec, &init, &checkpoints, cfg.run.replicas, cfg.run.seed, threads, &fingerprint)?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for t in &ens.replicas {
        let stamp = format!("# fingerprint={fingerprint} seed={} replica={}\n", t.seed, t.stream);
        write_file(&dir.join(format!("replica_{}.csv", t.stream)), &(stamp.clone() + &t.to_csv()))?;
        if cfg.run.history {
            let rec = ActionRecord { n_agents: n, actions: t.checkpoints.iter().map(|c| c.state.last_x.clone()).collect() };
            write_file(&dir.join(format!("actions_{}.csv", t.stream)), &(stamp + &rec.to_csv()))?;
        }
    }
    let summary_steps: Vec<u64> = if cfg.run.history { vec![cfg.run.horizon] } else { checkpoints.clone() };
    let per_step: Vec<Value> = summary_steps
        .iter()
        .map(|&step| {
            let nt = ens.ntilde_at(step);
            let mean = nt.iter().sum::<f64>() / nt.len() as f64;
            let var = nt.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nt.len().max(2) - 1) as f64;
            json!({ "step": step, "ntilde_mean": mean, "ntilde_variance": var, "ntilde": nt })
        })
        .collect();
    let report = json!({
        "command": "simulate",
        "fingerprint": fingerprint,
        "seed": cfg.run.seed,
        "replicas": cfg.run.replicas,
        "agents": n,
        "checkpoints": checkpoints.len(),
        "degenerate_start": ens.degenerate_start,
        "config": cfg,
        "summary": per_step,
    });
    write_file(&dir.join("summary.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(Outcome { report, passed: true })
}

fn covariance_value(c: &Result<CovarianceSpec, asymptotics::AsymptoticsError>) -> (Value, bool) {
    match c {
        Ok(c) => (serde_json::to_value(c).unwrap_or_default(), c.is_psd()),
        Err(e) => (json!({ "error": e.to_string() }), false),
    }
}

/// Regime tags, rates and every asymptotic covariance of the configured model.
pub fn covariance(config: &Path, out: Option<&Path>) -> Result<Outcome> {
    let Loaded { cfg, spec, params: p, .. } = load(config, None)?;
    let regime = p.regime()?;
    let assumptions = check_clt_assumptions(&spec, p.gamma, p.c, p.nu, p.q);
    let (y, y_ok) = covariance_value(&asymptotics::covariance_y(&spec, &p));
    let (nt, nt_ok) = covariance_value(&asymptotics::covariance_ntilde(&spec, &p));
    let (np, np_ok) = covariance_value(&asymptotics::covariance_nprime(&spec, &p));
    let sigma_gamma = asymptotics::sigma_tilde_gamma_sq(&spec, p.c, p.gamma)?;
    let mean_field = cfg.mean_field_alpha().map(|alpha| {
        json!({
            "alpha": alpha,
            "s_q": mf::s_q(p.q),
            "s_star": mf::s_star(alpha, &p).ok(),
        })
    });
    let report = json!({
        "command": "covariance",
        "fingerprint": cfg.fingerprint(),
        "seed": cfg.run.seed,
        "params": p,
        "regime": regime,
        "assumptions": assumptions,
        "spectral": spec.summary(),
        "sigma_gamma_sq": sigma_gamma,
        "sigma_tilde_sq": asymptotics::sigma_tilde_sq(&spec, &p)?,
        "y": y,
        "ntilde": nt,
        "nprime": np,
        "mean_field": mean_field,
    });
    let passed = assumptions.passed && y_ok && nt_ok && np_ok;
    emit(report, passed, out, "covariance.json")
}

/// Confidence interval for the common limit from observed actions.
pub fn ci(data: &Path, config: &Path, level: f64, out: Option<&Path>) -> Result<Outcome> {
    if !(level > 0.0 && level < 1.0) {
        bail!("--level must lie in (0, 1), got {level}");
    }
    let Loaded { cfg, spec, params, .. } = load(config, None)?;
    let rec = load_actions(data)?;
    let (_, w) = cfg.schedules()?;
    let interval = inference::confidence_interval(&rec, &w, &spec, &params, level)?;
    let report = json!({
        "command": "ci",
        "fingerprint": cfg.fingerprint(),
        "seed": cfg.run.seed,
        "data_sha256": sha256_hex(read(data)?.as_bytes()),
        "interval": interval,
    });
    emit(report, true, out, "ci.json")
}

/// χ² test of a hypothesized interaction matrix. A rejection is a result, not a failure.
pub fn test_w(data: &Path, w_file: &Path, config: &Path, alpha: f64, out: Option<&Path>) -> Result<Outcome> {
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!("--alpha must lie in (0, 1), got {alpha}");
    }
    let Loaded { cfg, spec, params, .. } = load(config, Some(w_file))?;
    let rec = load_actions(data)?;
    let (_, w) = cfg.schedules()?;
    let test = inference::chi_square_w_test(&rec, &w, &spec, &params)?;
    let report = json!({
        "command": "test-w",
        "fingerprint": cfg.fingerprint(),
        "seed": cfg.run.seed,
        "data_sha256": sha256_hex(read(data)?.as_bytes()),
        "w_sha256": sha256_hex(read(w_file)?.as_bytes()),
        "alpha": alpha,
        "rejected": test.p_value < alpha,
        "test": test,
    });
    emit(report, true, out, "test_w.json")
}

/// Monte Carlo check of the limit theorems for the configured model.
pub fn verify_clt(config: &Path, replicas: Option<usize>, horizon: Option<u64>, out: Option<&Path>, threads: Option<usize>) -> Result<Outcome> {
    let Loaded { mut cfg, net, spec, params, .. } = load(config, None)?;
    if let Some(r) = replicas {
        cfg.run.replicas = r;
    }
    if let Some(h) = horizon {
        cfg.run.horizon = h;
        cfg.run.checkpoints.clear();
    }
    let n = net.n_agents();
    let opts = VerifyOptions {
        replicas: cfg.run.replicas,
        horizon: cfg.run.horizon,
        n_ref: cfg.n_ref(),
        seed: cfg.run.seed,
        init: cfg.run.init.to_mode(n),
        proxy: cfg.verify.proxy,
        tolerances: cfg.verify.tolerances,
        rate_horizons: cfg.verify.rate_horizons.clone(),
        rate_tolerance: cfg.verify.rate_tolerance,
        sync_early: cfg.verify.sync_early.min(cfg.run.horizon),
        allow_boundary: cfg.verify.allow_boundary,
    };
    let fingerprint = cfg.fingerprint();
    let (r, w) = cfg.schedules()?;
    let setup = SimSetup::new(net, r, w, opts.n_ref);
    let verdict = verify::verify_clt(&setup, &spec, &params, &opts, threads, &fingerprint)?;
    let passed = verdict.passed;
    let report = json!({
        "command": "verify-clt",
        "fingerprint": fingerprint,
        "seed": cfg.run.seed,
        "options": opts,
        "report": verdict,
        "passed": passed,
    });
    emit(report, passed, out, "verify.json")
}

/// Deterministic oracle suites.
pub fn lemmas(suite: &str, horizon: u64, out: Option<&Path>) -> Result<Outcome> {
    let rep = numerics::run_suite(suite, horizon)?;
    let invocation = json!({ "suite": suite, "horizon": horizon });
    let passed = rep.passed;
    let report = json!({
        "command": "lemmas",
        "fingerprint": sha256_hex(invocation.to_string().as_bytes()),
        "seed": numerics::SWEEP_SEED,
        "horizon": horizon,
        "report": rep,
    });
    emit(report, passed, out, "lemmas.json")
}

/// Validate a network file and print its spectral summary.
pub fn validate_network_file(path: &Path, out: Option<&Path>) -> Result<Outcome> {
    let text = read(path)?;
    let net = validate_network(parse_network_csv(&text)?)?;
    let spec = spectral_decompose(&net)?;
    let report = json!({
        "command": "validate-network",
        "fingerprint": sha256_hex(text.as_bytes()),
        "seed": Value::Null,
        "spectral": spec.summary(),
    });
    emit(report, true, out, "network.json")
}
