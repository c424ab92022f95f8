//! Acceptance run: one PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use irsp::asymptotics::{matrices_case_d, matrices_case_d_at_one, Params};
use irsp::inference::{chi_square_from_means, chi_square_mean_field, confidence_interval_from_means, Whitener};
use irsp::nalgebra::{DMatrix, DVector};
use irsp::network::{mean_field, spectral_decompose, validate_network, SpectralData, WeightedNetwork, C64};
use irsp::numerics::{closure_check, closure_grid, run_suite};
use irsp::schedules::{make_r, make_weights, WeightFamily};
use irsp::simulator::{run_ensemble, EnsembleResult, InitMode, SimSetup};
use irsp::verify::{
    compare_covariance, ks_uniform, rate_probe, residuals_nprime, residuals_ntilde, synchronization_check, ProxyCorrection, Tolerances,
    ABSORBED_TOL, MAX_EXCLUDED, RATE_LAG,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

struct Model {
    setup: SimSetup,
    spec: SpectralData,
    params: Params,
}

fn model(net: WeightedNetwork, c: f64, gamma: f64, family: WeightFamily, horizon: u64) -> Model {
    let r = make_r(c, gamma).unwrap();
    let w = make_weights(family).unwrap();
    let spec = spectral_decompose(&net).unwrap();
    let params = Params::from_schedules(&r, &w);
    Model { setup: SimSetup::new(net, r, w, horizon), spec, params }
}

fn ensemble(m: &Model, steps: &[u64], replicas: usize, seed: u64, threads: Option<usize>) -> EnsembleResult {
    let n = m.spec.n_agents();
    let init = InitMode::Fixed { z0: vec![0.5; n] };
    run_ensemble(&m.setup, &m.spec, &init, steps, replicas, seed, threads, "acceptance").unwrap()
}

fn random_network(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut w = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.01..1.0));
    for mut col in w.column_iter_mut() {
        let s: f64 = col.sum();
        col /= s;
    }
    w
}

fn c1_spectral() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_bio, mut worst_rec, mut tested) = (0.0f64, 0.0f64, 0);
    while tested < 100 {
        let n = rng.random_range(2..=20);
        let w = random_network(&mut rng, n);
        let Ok(net) = validate_network(w.clone()) else { continue };
        let s = spectral_decompose(&net).map_err(|e| e.to_string())?;
        let lam = DMatrix::from_diagonal(&DVector::from_vec(s.eigenvalues.clone()));
        let rec = &s.left * lam * s.right.transpose() - w.transpose().map(|x| C64::new(x, 0.0));
        let bio = s.left.transpose() * &s.right - DMatrix::<C64>::identity(n, n);
        worst_rec = worst_rec.max(rec.iter().map(|z| z.norm()).fold(0.0, f64::max));
        worst_bio = worst_bio.max(bio.iter().map(|z| z.norm()).fold(0.0, f64::max));
        tested += 1;
    }
    let mut worst_mf = 0.0f64;
    for n in [2, 3, 5, 10, 20] {
        for alpha in [0.1, 0.5, 0.8, 1.0] {
            let s = spectral_decompose(&mean_field(n, alpha).unwrap()).map_err(|e| e.to_string())?;
            worst_mf = worst_mf.max((s.eigenvalues[0] - 1.0).norm());
            for l in &s.eigenvalues[1..] {
                worst_mf = worst_mf.max((l - (1.0 - alpha)).norm());
            }
        }
    }
    let ok = worst_bio < 1e-9 && worst_rec < 1e-9 && worst_mf < 1e-12;
    Ok((ok, format!("{tested} networks: biorthogonality {worst_bio:.2e}, reconstruction {worst_rec:.2e}; mean-field eigenvalues {worst_mf:.2e}")))
}

fn c2_synchronization() -> Outcome {
    let m = model(mean_field(3, 0.5).unwrap(), 1.0, 0.8, WeightFamily::Constant, 100_000);
    let ens = ensemble(&m, &[1_000, 100_000], 200, 2, None);
    let rep = synchronization_check(&ens, 1_000, 100_000, 1.0, 0.95).map_err(|e| e.to_string())?;
    Ok((rep.passed, format!("spread shrank on {:.1}% of 200 replicas (need 95%)", 100.0 * rep.fraction)))
}

fn c3_oracles() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for suite in ["a_matrix", "product_sums", "d_limits"] {
        let rep = run_suite(suite, 1_000_000).map_err(|e| e.to_string())?;
        let failed: Vec<&str> = rep.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        ok &= rep.passed;
        lines.push(format!("{suite}: {}/{} checks", rep.checks.len() - failed.len(), rep.checks.len()));
        if !failed.is_empty() {
            lines.push(format!("failed {failed:?}"));
        }
    }
    Ok((ok, lines.join("; ")))
}

fn c4_closure() -> Outcome {
    let nets = [mean_field(3, 0.5).unwrap(), validate_network(DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.3, 0.2, 0.7, 0.2, 0.3, 0.2, 0.5])).unwrap()];
    let (mut total, mut failed, mut worst) = (0, 0, 0.0f64);
    for net in &nets {
        let spec = spectral_decompose(net).unwrap();
        for (_, hat) in closure_grid() {
            for e in closure_check(&spec, &hat, 1_000_000).map_err(|e| e.to_string())? {
                total += 1;
                failed += usize::from(!e.passed);
                worst = worst.max(e.rel_error);
            }
        }
    }
    Ok((failed == 0, format!("{total} entries, {failed} outside 2%, worst relative error {worst:.2e}")))
}

fn c5_case_a() -> Outcome {
    let n = 100_000;
    let horizons = [1_000, 3_000, 10_000, 25_000];
    let m = model(mean_field(3, 0.5).unwrap(), 1.0, 0.9, WeightFamily::ExpSum { b: 5.0, delta: 0.4 }, n);
    let mut steps: Vec<u64> = horizons.iter().flat_map(|&h| [h, RATE_LAG * h]).chain([n]).collect();
    steps.sort_unstable();
    steps.dedup();
    let ens = ensemble(&m, &steps, 5_000, 5, None);
    let res = residuals_nprime(&ens, &m.spec, &m.params, n).map_err(|e| e.to_string())?;
    let cov = compare_covariance(&res, &Tolerances::default()).map_err(|e| e.to_string())?;
    let rate = rate_probe(&ens, &horizons, RATE_LAG, m.params.nu / 2.0, 0.05).map_err(|e| e.to_string())?;
    let comps: Vec<String> = cov.components.iter().map(|c| format!("(mean {:.3}, var {:.3}, ks {:.4})", c.mean, c.variance, c.ks)).collect();
    let case = m.params.regime().unwrap().case_y;
    Ok((cov.passed && rate.passed, format!("case {case:?}: {}; slope {:.3} (target -0.30 ± 0.05)", comps.join(" "), rate.slope)))
}

fn c6_case_d() -> Outcome {
    let (n, n_ref) = (100_000, 400_000);
    let m = model(mean_field(3, 0.8).unwrap(), 1.0, 1.0, WeightFamily::Constant, n_ref);
    let ens = ensemble(&m, &[n, n_ref], 5_000, 6, None);
    let res = residuals_ntilde(&ens, &m.setup, &m.spec, &m.params, n, n_ref, ProxyCorrection::Linear).map_err(|e| e.to_string())?;
    let cov = compare_covariance(&res, &Tolerances::default()).map_err(|e| e.to_string())?;
    let c = &cov.components[0];
    // Unified blocks at q = 1 against the literal transcription of the q = 1 formulas.
    let mut worst = 0.0f64;
    for net in [mean_field(3, 0.8).unwrap(), mean_field(5, 0.7).unwrap()] {
        let spec = spectral_decompose(&net).unwrap();
        for c in [1.0, 1.3] {
            let a = matrices_case_d(&spec, c, 1.0, true).map_err(|e| e.to_string())?;
            let b = matrices_case_d_at_one(&spec, c, 1.0).map_err(|e| e.to_string())?;
            for (x, y) in [(&a.s11, &b.s11), (&a.s12, &b.s12), (&a.s21, &b.s21), (&a.s22, &b.s22)] {
                worst = worst.max((x - y).iter().map(|z| z.norm()).fold(0.0, f64::max));
            }
        }
    }
    let identity = worst < 1e-12;
    Ok((
        cov.passed && identity,
        format!("mean {:.3}, var {:.3}, ks {:.4} (proxy ratio {:.3}); q = 1 block identity {worst:.1e}", c.mean, c.variance, c.ks, res.scale),
    ))
}

fn c7_chi_square() -> Outcome {
    let (agents, n) = (20, 100_000);
    let hypothesis = model(mean_field(agents, 0.8).unwrap(), 1.0, 1.0, WeightFamily::Constant, n);
    let whitener = Whitener::new(&hypothesis.spec, &hypothesis.params).map_err(|e| e.to_string())?;
    let ens = ensemble(&hypothesis, &[n], 2_000, 7, None);
    let (mut stats, mut pvals, mut route_gap) = (Vec::new(), Vec::new(), 0.0f64);
    for t in &ens.replicas {
        let nw = &t.last().state.nw;
        let rep = chi_square_from_means(nw, n, &hypothesis.spec, &whitener).map_err(|e| e.to_string())?;
        let fast = chi_square_mean_field(nw, n, 0.8, &hypothesis.params).map_err(|e| e.to_string())?;
        route_gap = route_gap.max((rep.statistic - fast.statistic).abs() / rep.statistic.max(1.0));
        stats.push(rep.statistic);
        pvals.push(rep.p_value);
    }
    let mean = stats.iter().sum::<f64>() / stats.len() as f64;
    let ks = ks_uniform(&pvals);
    let dof = (agents - 1) as f64;

    let alternative = model(mean_field(agents, 0.6).unwrap(), 1.0, 1.0, WeightFamily::Constant, n);
    let alt = ensemble(&alternative, &[n], 500, 8, None);
    let mut rejected = 0;
    for t in &alt.replicas {
        let rep = chi_square_from_means(&t.last().state.nw, n, &hypothesis.spec, &whitener).map_err(|e| e.to_string())?;
        rejected += usize::from(rep.p_value < 0.05);
    }
    let power = rejected as f64 / alt.replicas.len() as f64;
    let ok = (mean - dof).abs() <= 0.1 * dof && ks < 0.05 && power > 0.8 && route_gap < 1e-8;
    Ok((ok, format!("null mean {mean:.2} (dof {dof}), p-value ks {ks:.4}, power {power:.3}, route gap {route_gap:.1e}")))
}

fn c8_coverage() -> Outcome {
    let (n, n_ref) = (10_000, 1_000_000);
    let m = model(mean_field(3, 0.5).unwrap(), 0.5, 0.85, WeightFamily::ExpSum { b: 10.0, delta: 0.1 }, n_ref);
    let case = m.params.regime().unwrap().case_y;
    let ens = ensemble(&m, &[n, n_ref], 1_000, 9, None);
    let (mut covered, mut used) = (0, 0);
    for t in &ens.replicas {
        let at_n = t.at(n).unwrap();
        // Paths pinned at 0 or 1 carry no variance; they are excluded as in the residual checks.
        if at_n.ntilde * (1.0 - at_n.ntilde) < ABSORBED_TOL {
            continue;
        }
        let ci = confidence_interval_from_means(&at_n.state.nw, n, &m.spec, &m.params, 0.95).map_err(|e| e.to_string())?;
        let target = t.at(n_ref).unwrap().ntilde;
        used += 1;
        covered += usize::from(ci.lo <= target && target <= ci.hi);
    }
    let excluded = 1.0 - used as f64 / ens.replicas.len() as f64;
    let rate = covered as f64 / used.max(1) as f64;
    Ok((
        (rate - 0.95).abs() <= 0.02 && excluded <= MAX_EXCLUDED,
        format!("case {case:?}: coverage {:.1}% of {used} (target 95 ± 2), {:.1}% absorbed paths excluded", 100.0 * rate, 100.0 * excluded),
    ))
}

fn c9_determinism() -> Outcome {
    let m = model(mean_field(4, 0.6).unwrap(), 1.0, 0.8, WeightFamily::PowerSum { delta: 0.7 }, 2_000);
    let runs: Vec<String> = [Some(1), Some(2), Some(4), None]
        .into_iter()
        .map(|threads| serde_json::to_string(&ensemble(&m, &[10, 500, 2_000], 64, 10, threads)).unwrap())
        .collect();
    let same = runs.iter().all(|r| r == &runs[0]);
    Ok((same, format!("64 replicas under 1, 2, 4 and default threads: {} bytes each, identical = {same}", runs[0].len())))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("spectral decomposition", c1_spectral),
        ("synchronization", c2_synchronization),
        ("oracle suites", c3_oracles),
        ("covariance closure", c4_closure),
        ("fluctuation CLT, case (a)", c5_case_a),
        ("common-component CLT, case (d)", c6_case_d),
        ("chi-square calibration and power", c7_chi_square),
        ("confidence-interval coverage", c8_coverage),
        ("determinism across threads", c9_determinism),
    ];
    let mut all = true;
    let mut total = Duration::ZERO;
    // Optional criterion numbers on the command line select a subset.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        let took = start.elapsed();
        total += took;
        all &= ok;
        println!("{} criterion {} ({name}): {detail} [{:.1}s]", if ok { "PASS" } else { "FAIL" }, i + 1, took.as_secs_f64());
    }
    println!("acceptance: {} in {:.0}s", if all { "all criteria passed" } else { "some criteria failed" }, total.as_secs_f64());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
