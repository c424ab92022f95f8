//! Monte Carlo checks that simulated ensembles follow the predicted rates and
//! covariances.
//!
//! Residuals are standardized per path by the plug-in factor `Ñ(1 − Ñ)`, which
//! is how the random factor `Z∞(1 − Z∞)` of the mixed-normal limits is removed.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

use crate::asymptotics::{covariance_ntilde, AsymptoticsError, Params};
use crate::inference::{InferenceError, Whitener};
use crate::network::{SpectralData, EXPONENT_TOL};
use crate::schedules::ScheduleError;
use crate::simulator::{run_ensemble, EnsembleResult, InitMode, SimError, SimSetup};

/// Paths with `Ñ(1 − Ñ)` below this are treated as absorbed and excluded.
pub const ABSORBED_TOL: f64 = 1e-6;
/// Runs excluding more than this fraction of paths are flagged.
pub const MAX_EXCLUDED: f64 = 0.05;
/// Configurations this close to (but not on) the `ν = γ0` boundary are refused.
pub const BOUNDARY_GAP: f64 = 0.05;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("reference horizon {n_ref} must exceed the evaluation horizon {n}")]
    HorizonOrdering { n: u64, n_ref: u64 },
    #[error("step {0} was not recorded in the ensemble")]
    MissingCheckpoint(u64),
    #[error("nu = {nu} is within {BOUNDARY_GAP} of the regime boundary gamma0 = {gamma0}")]
    NearBoundary { nu: f64, gamma0: f64 },
    #[error("not enough usable replicas ({0})")]
    TooFewReplicas(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

pub type Result<T> = std::result::Result<T, VerifyError>;

/// How the unobservable `Z∞` is replaced by the same path's `Ñ` at a longer horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProxyCorrection {
    /// Use `Ñ_{n_ref}` as if it were `Z∞`.
    None,
    /// Rescale by the variance ratio `κ` of `Ñ_n − Ñ_{n_ref}` to `Ñ_n − Z∞`
    /// under the linearized dynamics.
    #[default]
    Linear,
}

/// Per-replica standardized statistics.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualSample {
    /// `values[r][i]`: component `i` of replica `r`.
    pub values: Vec<Vec<f64>>,
    pub excluded: usize,
    pub total: usize,
    pub exclusion_fraction: f64,
    /// Set when more than [`MAX_EXCLUDED`] of the paths were absorbed.
    pub flagged: bool,
    pub scale: f64,
}

impl ResidualSample {
    fn new(values: Vec<Vec<f64>>, total: usize, scale: f64) -> Self {
        let excluded = total - values.len();
        let exclusion_fraction = excluded as f64 / total.max(1) as f64;
        Self { values, excluded, total, exclusion_fraction, flagged: exclusion_fraction > MAX_EXCLUDED, scale }
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[i]).collect()
    }
}

fn checkpoint(ens: &EnsembleResult, replica: usize, step: u64) -> Result<&crate::simulator::Checkpoint> {
    ens.replicas[replica].at(step).ok_or(VerifyError::MissingCheckpoint(step))
}

/// Variance ratio `κ = Var(Ñ_n − Ñ_m) / Var(Ñ_n − Z∞)` under the linearization
/// `Ñ_n − Z∞ ≈ ∑_k a_k(n) ξ_k` with `a_k(n) = 1_{k≤n} Φ(k,n)(q_{k,k} − r_{k−1}) − 1_{k>n} r_{k−1}`,
/// `Φ(k,n) = ∏_{k<i≤n}(1 − q_{i,i})`, and asymptotically homoscedastic increments.
pub fn proxy_variance_ratio(setup: &SimSetup, n: u64, m: u64) -> f64 {
    let phi = |h: u64| -> Vec<f64> {
        // phi[k] = Φ(k, h) for k = 1..=h.
        let mut out = vec![0.0; h as usize + 1];
        let mut acc = 1.0;
        for k in (1..=h).rev() {
            out[k as usize] = acc;
            acc *= 1.0 - setup.w.q_nn(k);
        }
        out
    };
    let (pn, pm) = (phi(n), phi(m));
    let a = |p: &[f64], h: u64, k: u64| -> f64 {
        let r = setup.r.step_rate(k);
        if k <= h {
            p[k as usize] * (setup.w.q_nn(k) - r)
        } else {
            -r
        }
    };
    let (mut num, mut den) = (0.0, 0.0);
    for k in 1..=m {
        let (an, am) = (a(&pn, n, k), a(&pm, m, k));
        num += (an - am).powi(2);
        den += an * an;
    }
    // Beyond m both coefficients equal −r_{k−1}: no contribution to the
    // numerator; the denominator tail is summed to 20m and integrated after.
    let cutoff = 20 * m;
    for k in m + 1..=cutoff {
        den += setup.r.step_rate(k).powi(2);
    }
    let (c, g) = (setup.r.c, setup.r.gamma);
    den += c * c * ((cutoff + setup.r.start) as f64).powf(1.0 - 2.0 * g) / (2.0 * g - 1.0);
    num / den
}

/// `n^{rate}(Ñ_n − Ẑ∞)/sqrt(Ẑ∞(1 − Ẑ∞)σ²)` with `Ẑ∞ = Ñ_{n_ref}` of the same path.
pub fn residuals_ntilde(
    ens: &EnsembleResult,
    setup: &SimSetup,
    spec: &SpectralData,
    p: &Params,
    n: u64,
    n_ref: u64,
    correction: ProxyCorrection,
) -> Result<ResidualSample> {
    if n_ref <= n {
        return Err(VerifyError::HorizonOrdering { n, n_ref });
    }
    let cov = covariance_ntilde(spec, p)?;
    let kappa = match correction {
        ProxyCorrection::None => 1.0,
        ProxyCorrection::Linear => proxy_variance_ratio(setup, n, n_ref),
    };
    let scale = (n as f64).powf(cov.rate) / (cov.scalar() * kappa).sqrt();
    let mut values = Vec::new();
    for r in 0..ens.replicas.len() {
        let (a, b) = (checkpoint(ens, r, n)?, checkpoint(ens, r, n_ref)?);
        let f = b.ntilde * (1.0 - b.ntilde);
        if f < ABSORBED_TOL {
            continue;
        }
        values.push(vec![scale * (a.ntilde - b.ntilde) / f.sqrt()]);
    }
    Ok(ResidualSample::new(values, ens.replicas.len(), kappa))
}

/// Whitened fluctuation residuals `n^{ν/2} Λ^{−1/2} Eᵀ N′_n / sqrt(Ñ_n(1 − Ñ_n))`.
pub fn residuals_nprime(ens: &EnsembleResult, spec: &SpectralData, p: &Params, n: u64) -> Result<ResidualSample> {
    let wh = Whitener::new(spec, p)?;
    let scale = (n as f64).powf(wh.rate);
    let mut values = Vec::new();
    for r in 0..ens.replicas.len() {
        let c = checkpoint(ens, r, n)?;
        let f = c.ntilde * (1.0 - c.ntilde);
        if f < ABSORBED_TOL {
            continue;
        }
        values.push(wh.whiten(&c.nprime).iter().map(|x| scale * x / f.sqrt()).collect());
    }
    Ok(ResidualSample::new(values, ens.replicas.len(), 1.0))
}

/// Kolmogorov–Smirnov distance of the sample from the distribution `cdf`.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs: Vec<f64> = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

pub fn ks_normal(sample: &[f64]) -> f64 {
    let z = Normal::standard();
    ks_distance(sample, |x| z.cdf(x))
}

pub fn ks_uniform(sample: &[f64]) -> f64 {
    ks_distance(sample, |x| x.clamp(0.0, 1.0))
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub mean: f64,
    pub var_lo: f64,
    pub var_hi: f64,
    pub ks: f64,
    /// Bound on the absolute sample cross-covariance of distinct components.
    pub cross: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { mean: 0.05, var_lo: 0.9, var_hi: 1.1, ks: 0.03, cross: 0.1 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentStats {
    pub mean: f64,
    pub variance: f64,
    pub ks: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovarianceReport {
    pub components: Vec<ComponentStats>,
    pub max_cross_covariance: f64,
    pub replicas_used: usize,
    pub exclusion_fraction: f64,
    pub passed: bool,
}

/// Compare the residuals with the standard normal law componentwise.
pub fn compare_covariance(sample: &ResidualSample, tol: &Tolerances) -> Result<CovarianceReport> {
    if sample.values.len() < 2 {
        return Err(VerifyError::TooFewReplicas(sample.values.len()));
    }
    let d = sample.dim();
    let cols: Vec<Vec<f64>> = (0..d).map(|i| sample.component(i)).collect();
    let components: Vec<ComponentStats> = cols
        .iter()
        .map(|x| {
            let (mean, variance) = mean_var(x);
            let ks = ks_normal(x);
            let passed = mean.abs() < tol.mean && variance >= tol.var_lo && variance <= tol.var_hi && ks < tol.ks;
            ComponentStats { mean, variance, ks, passed }
        })
        .collect();
    let mut cross: f64 = 0.0;
    for i in 0..d {
        for j in i + 1..d {
            let (mi, mj) = (components[i].mean, components[j].mean);
            let c = cols[i].iter().zip(&cols[j]).map(|(a, b)| (a - mi) * (b - mj)).sum::<f64>() / (cols[i].len() as f64 - 1.0);
            cross = cross.max(c.abs());
        }
    }
    let passed = components.iter().all(|c| c.passed) && cross < tol.cross && !sample.flagged;
    Ok(CovarianceReport {
        components,
        max_cross_covariance: cross,
        replicas_used: sample.values.len(),
        exclusion_fraction: sample.exclusion_fraction,
        passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub horizons: Vec<u64>,
    pub lag_factor: u64,
    pub std_devs: Vec<f64>,
    pub slope: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Least-squares slope of `log sd(Ñ_h − Ñ_{lag·h})` on `log h`, compared with `−rate`.
/// The increment removes the unknown limit; its scale follows the same power of `h`.
pub fn rate_probe(ens: &EnsembleResult, horizons: &[u64], lag_factor: u64, rate: f64, tolerance: f64) -> Result<RateReport> {
    let mut std_devs = Vec::new();
    for &h in horizons {
        let mut xs = Vec::new();
        for r in 0..ens.replicas.len() {
            xs.push(checkpoint(ens, r, h)?.ntilde - checkpoint(ens, r, h * lag_factor)?.ntilde);
        }
        std_devs.push(mean_var(&xs).1.sqrt());
    }
    let lx: Vec<f64> = horizons.iter().map(|&h| (h as f64).ln()).collect();
    let ly: Vec<f64> = std_devs.iter().map(|s| s.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / lx.len() as f64, ly.iter().sum::<f64>() / ly.len() as f64);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let expected = -rate;
    Ok(RateReport {
        horizons: horizons.to_vec(),
        lag_factor,
        std_devs,
        slope,
        expected,
        tolerance,
        passed: (slope - expected).abs() <= tolerance,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SyncReport {
    pub early: u64,
    pub late: u64,
    pub factor: f64,
    pub fraction: f64,
    pub required: f64,
    pub passed: bool,
}

/// Fraction of paths with `max_j |N_{late,j} − Ñ_late| < factor · max_j |N_{early,j} − Ñ_early|`.
pub fn synchronization_check(ens: &EnsembleResult, early: u64, late: u64, factor: f64, required: f64) -> Result<SyncReport> {
    let spread = |c: &crate::simulator::Checkpoint| c.nprime.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut hits = 0usize;
    for r in 0..ens.replicas.len() {
        if spread(checkpoint(ens, r, late)?) < factor * spread(checkpoint(ens, r, early)?) {
            hits += 1;
        }
    }
    let fraction = hits as f64 / ens.replicas.len() as f64;
    Ok(SyncReport { early, late, factor, fraction, required, passed: fraction >= required })
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleReport {
    pub step: u64,
    pub mean: f64,
    pub std_error: f64,
    pub passed: bool,
}

/// Mean over paths of `v_1ᵀ(X_{n+1} − WᵀZ_n)`; must be within three standard errors of zero.
pub fn martingale_check(ens: &EnsembleResult, setup: &SimSetup, spec: &SpectralData, n: u64) -> Result<MartingaleReport> {
    let w = setup.net.weights();
    let k = spec.n_agents();
    let mut xs = Vec::new();
    for r in 0..ens.replicas.len() {
        let (a, b) = (&checkpoint(ens, r, n)?.state, &checkpoint(ens, r, n + 1)?.state);
        xs.push((0..k).map(|j| spec.v1[j] * (b.last_x[j] as f64 - (0..k).map(|h| w[(h, j)] * a.z[h]).sum::<f64>())).sum::<f64>());
    }
    let (mean, var) = mean_var(&xs);
    let std_error = (var / xs.len() as f64).sqrt();
    Ok(MartingaleReport { step: n, mean, std_error, passed: mean.abs() <= 3.0 * std_error })
}

#[derive(Debug, Clone, Serialize)]
pub struct ChiSquareCalibration {
    pub dof: usize,
    pub mean: f64,
    pub quantile_95: f64,
    pub expected_quantile_95: f64,
    pub ks_uniform: f64,
    pub mean_ok: bool,
    pub quantile_ok: bool,
    pub uniform_ok: bool,
    pub passed: bool,
}

/// Calibration of χ² statistics under the null: mean and 95th percentile within
/// 10% of the reference law, p-values within KS distance 0.05 of uniform.
pub fn chi_square_calibration(statistics: &[f64], p_values: &[f64], dof: usize) -> ChiSquareCalibration {
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    let mut sorted = statistics.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    let quantile_95 = sorted[idx];
    let expected_quantile_95 = dist.inverse_cdf(0.95);
    let mean = statistics.iter().sum::<f64>() / statistics.len() as f64;
    let ks = ks_uniform(p_values);
    let mean_ok = (mean - dof as f64).abs() <= 0.1 * dof as f64;
    let quantile_ok = (quantile_95 - expected_quantile_95).abs() <= 0.1 * expected_quantile_95;
    let uniform_ok = ks < 0.05;
    ChiSquareCalibration {
        dof,
        mean,
        quantile_95,
        expected_quantile_95,
        ks_uniform: ks,
        mean_ok,
        quantile_ok,
        uniform_ok,
        passed: mean_ok && quantile_ok && uniform_ok,
    }
}

/// `true` when `ν` lies within [`BOUNDARY_GAP`] of `γ0` without being on it.
pub fn near_boundary(gamma: f64, nu: f64) -> bool {
    let gamma0 = (2.0 * gamma - 1.0).max(0.5);
    let gap = (nu - gamma0).abs();
    gap > EXPONENT_TOL && gap < BOUNDARY_GAP
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct VerifyOptions {
    pub replicas: usize,
    pub horizon: u64,
    pub n_ref: u64,
    pub seed: u64,
    pub init: InitMode,
    pub proxy: ProxyCorrection,
    pub tolerances: Tolerances,
    /// Horizons of the rate probe; each also needs `4h` recorded.
    pub rate_horizons: Vec<u64>,
    pub rate_tolerance: f64,
    pub sync_early: u64,
    pub allow_boundary: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check<T: Serialize> {
    pub passed: bool,
    pub detail: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub params: Params,
    pub rate_ntilde: f64,
    pub rate_nprime: f64,
    pub proxy_kappa: f64,
    pub degenerate_start: bool,
    pub ntilde: CovarianceReport,
    pub nprime: Option<CovarianceReport>,
    pub synchronization: SyncReport,
    pub martingale: MartingaleReport,
    pub rate: Option<RateReport>,
    pub passed: bool,
}

pub const RATE_LAG: u64 = 4;

/// Simulate an ensemble and run every residual check on it.
pub fn verify_clt(setup: &SimSetup, spec: &SpectralData, p: &Params, opts: &VerifyOptions, threads: Option<usize>, fingerprint: &str) -> Result<VerifyReport> {
    let regime = p.regime()?;
    if !opts.allow_boundary && near_boundary(p.gamma, p.nu) {
        return Err(VerifyError::NearBoundary { nu: p.nu, gamma0: regime.gamma0 });
    }
    if opts.n_ref <= opts.horizon {
        return Err(VerifyError::HorizonOrdering { n: opts.horizon, n_ref: opts.n_ref });
    }
    let mut steps = vec![opts.sync_early, opts.horizon, opts.horizon + 1, opts.n_ref];
    for &h in &opts.rate_horizons {
        steps.push(h);
        steps.push(RATE_LAG * h);
    }
    steps.sort_unstable();
    steps.dedup();
    let ens = run_ensemble(setup, spec, &opts.init, &steps, opts.replicas, opts.seed, threads, fingerprint)?;
    let n = opts.horizon;
    let rn = residuals_ntilde(&ens, setup, spec, p, n, opts.n_ref, opts.proxy)?;
    let ntilde = compare_covariance(&rn, &opts.tolerances)?;
    let nprime = if spec.n_agents() > 1 { Some(compare_covariance(&residuals_nprime(&ens, spec, p, n)?, &opts.tolerances)?) } else { None };
    let synchronization = synchronization_check(&ens, opts.sync_early, n, 1.0, 0.95)?;
    let martingale = martingale_check(&ens, setup, spec, n)?;
    let rate = if opts.rate_horizons.len() >= 2 {
        Some(rate_probe(&ens, &opts.rate_horizons, RATE_LAG, regime.rate_ntilde, opts.rate_tolerance)?)
    } else {
        None
    };
    let passed = ntilde.passed
        && nprime.as_ref().is_none_or(|r| r.passed)
        && synchronization.passed
        && martingale.passed
        && rate.as_ref().is_none_or(|r| r.passed);
    Ok(VerifyReport {
        params: *p,
        rate_ntilde: regime.rate_ntilde,
        rate_nprime: regime.rate_nprime,
        proxy_kappa: rn.scale,
        degenerate_start: ens.degenerate_start,
        ntilde,
        nprime,
        synchronization,
        martingale,
        rate,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{mean_field, spectral_decompose};
    use crate::schedules::{make_r, make_weights, WeightFamily};
    use rand::{Rng, SeedableRng};

    #[test]
    fn ks_against_known_values() {
        // One point at the median: distance 1/2.
        assert!((ks_normal(&[0.0]) - 0.5).abs() < 1e-12);
        let grid: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!((ks_uniform(&grid) - 0.0005).abs() < 1e-12);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let z = Normal::standard();
        let xs: Vec<f64> = (0..5000).map(|_| z.inverse_cdf(rng.random::<f64>())).collect();
        assert!(ks_normal(&xs) < 0.03);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.2).collect();
        assert!(ks_normal(&shifted) > 0.05);
    }

    #[test]
    fn calibration_on_exact_draws() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let dist = ChiSquared::new(2.0).unwrap();
        let stats: Vec<f64> = (0..4000).map(|_| dist.inverse_cdf(rng.random::<f64>())).collect();
        let p: Vec<f64> = stats.iter().map(|s| dist.sf(*s)).collect();
        assert!(chi_square_calibration(&stats, &p, 2).passed);
        let inflated: Vec<f64> = stats.iter().map(|s| 1.5 * s).collect();
        let p: Vec<f64> = inflated.iter().map(|s| dist.sf(*s)).collect();
        assert!(!chi_square_calibration(&inflated, &p, 2).passed);
    }

    #[test]
    fn kappa_limits() {
        let net = mean_field(3, 0.5).unwrap();
        let setup = SimSetup::new(net, make_r(1.0, 1.0).unwrap(), make_weights(WeightFamily::Constant).unwrap(), 10);
        let k = proxy_variance_ratio(&setup, 1000, 4000);
        assert!(k > 0.0 && k < 1.0, "{k}");
        // A far reference leaves nearly the full variance.
        assert!(proxy_variance_ratio(&setup, 100, 100_000) > k);
    }

    #[test]
    fn boundary_rule() {
        assert!(!near_boundary(1.0, 1.0));
        assert!(near_boundary(0.8, 0.62));
        assert!(!near_boundary(0.9, 0.6));
        assert!(!near_boundary(0.75, 0.9));
    }

    #[test]
    fn small_verification_run_is_consistent() {
        let net = mean_field(3, 0.8).unwrap();
        let spec = spectral_decompose(&net).unwrap();
        let setup = SimSetup::new(net, make_r(1.0, 1.0).unwrap(), make_weights(WeightFamily::Constant).unwrap(), 10);
        let p = Params::new(1.0, 1.0, 1.0, 1.0);
        let opts = VerifyOptions {
            replicas: 400,
            horizon: 2000,
            n_ref: 8000,
            seed: 9,
            init: InitMode::Fixed { z0: vec![0.5; 3] },
            proxy: ProxyCorrection::Linear,
            tolerances: Tolerances { mean: 0.2, var_lo: 0.75, var_hi: 1.25, ks: 0.08, cross: 0.2 },
            rate_horizons: vec![],
            rate_tolerance: 0.05,
            sync_early: 20,
            allow_boundary: false,
        };
        let rep = verify_clt(&setup, &spec, &p, &opts, Some(1), "t").unwrap();
        assert!(rep.passed, "{}", serde_json::to_string_pretty(&rep).unwrap());
        assert_eq!(rep.nprime.as_ref().unwrap().components.len(), 2);
        let bad = VerifyOptions { n_ref: 2000, ..opts };
        assert!(matches!(verify_clt(&setup, &spec, &p, &bad, None, ""), Err(VerifyError::HorizonOrdering { .. })));
    }
}
