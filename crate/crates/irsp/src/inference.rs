//! Confidence intervals for the common limit `Z∞` and χ² tests of a
//! hypothesized interaction matrix, both built only from observed actions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

use crate::asymptotics::{covariance_nprime, covariance_ntilde, mean_field as mf, AsymptoticsError, Params};
use crate::network::SpectralData;
use crate::schedules::WeightSchedule;

/// Plug-in variance factors `Ñ(1 − Ñ)` below this are treated as absorbed paths.
pub const DEGENERATE_TOL: f64 = 1e-12;
/// Relative eigenvalue floor for the fluctuation covariance to be invertible on its range.
pub const WHITENING_TOL: f64 = 1e-10;
/// Below this many observations the asymptotic approximations are flagged.
pub const SMALL_SAMPLE: u64 = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}, column {column}: entry {value:?} is not 0 or 1")]
    NonBinaryEntry { line: usize, column: usize, value: String },
    #[error("line {line}: expected step {expected}, found {found}")]
    GapInSteps { line: usize, expected: u64, found: u64 },
    #[error("plug-in variance factor {0} is degenerate (absorbed path)")]
    DegenerateVariance(f64),
    #[error("fluctuation covariance is singular on its range (eigenvalue ratio {0})")]
    SingularWhitening(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0}")]
    Parameter(String),
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
}

pub type Result<T> = std::result::Result<T, InferenceError>;

/// Observed binary actions, one row per step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionRecord {
    pub n_agents: usize,
    pub actions: Vec<Vec<u8>>,
}

impl ActionRecord {
    pub fn steps(&self) -> u64 {
        self.actions.len() as u64
    }

    pub fn to_csv(&self) -> String {
        let header: Vec<String> = (1..=self.n_agents).map(|j| format!("agent_{j}")).collect();
        let mut out = format!("step,{}\n", header.join(","));
        for (k, row) in self.actions.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            out.push_str(&format!("{},{}\n", k + 1, cells.join(",")));
        }
        out
    }
}

/// Parse `step,agent_1,…,agent_N` followed by rows for steps `1, 2, …`.
/// Lines starting with `#` are comments.
pub fn parse_actions_csv(text: &str) -> Result<ActionRecord> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(InferenceError::MalformedRow { line: 1, reason: e.to_string() }),
        None => return Err(InferenceError::MalformedRow { line: 1, reason: "missing header".into() }),
    };
    let n_agents = header.len().saturating_sub(1);
    let expected_header = (1..=n_agents).all(|j| header.get(j) == Some(&format!("agent_{j}")[..]));
    if header.get(0) != Some("step") || n_agents == 0 || !expected_header {
        return Err(InferenceError::MalformedRow { line: 1, reason: "header must be step,agent_1,…,agent_N".into() });
    }
    let mut actions = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| InferenceError::MalformedRow { line: i + 2, reason: e.to_string() })?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        if rec.len() != n_agents + 1 {
            return Err(InferenceError::MalformedRow { line, reason: format!("expected {} fields, found {}", n_agents + 1, rec.len()) });
        }
        let found: u64 = rec[0].parse().map_err(|_| InferenceError::MalformedRow { line, reason: format!("bad step {:?}", &rec[0]) })?;
        let expected = actions.len() as u64 + 1;
        if found != expected {
            return Err(InferenceError::GapInSteps { line, expected, found });
        }
        let row = (1..=n_agents)
            .map(|j| match &rec[j] {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                v => Err(InferenceError::NonBinaryEntry { line, column: j + 1, value: v.to_string() }),
            })
            .collect::<Result<Vec<u8>>>()?;
        actions.push(row);
    }
    Ok(ActionRecord { n_agents, actions })
}

/// `N_{n,j} = ∑_{k≤n} q_{n,k} X_{k,j}` by the one-step recursion.
pub fn weighted_means(rec: &ActionRecord, w: &WeightSchedule, n: u64) -> Result<Vec<f64>> {
    if n > rec.steps() {
        return Err(InferenceError::Parameter(format!("n = {n} exceeds the {} recorded steps", rec.steps())));
    }
    let mut nw = vec![0.0; rec.n_agents];
    for k in 1..=n {
        let q = w.q_nn(k);
        for (m, &x) in nw.iter_mut().zip(&rec.actions[(k - 1) as usize]) {
            *m = (1.0 - q) * *m + q * x as f64;
        }
    }
    Ok(nw)
}

/// `Ñ_n = N^{−1/2} v_1ᵀ N_n`.
pub fn plug_in(nw: &[f64], spec: &SpectralData) -> Result<f64> {
    if nw.len() != spec.n_agents() {
        return Err(InferenceError::DimensionMismatch { expected: spec.n_agents(), got: nw.len() });
    }
    Ok(nw.iter().zip(&spec.v1).map(|(a, b)| a * b).sum::<f64>() / (nw.len() as f64).sqrt())
}

fn variance_factor(ntilde: f64) -> Result<f64> {
    let f = ntilde * (1.0 - ntilde);
    if f < DEGENERATE_TOL {
        return Err(InferenceError::DegenerateVariance(f));
    }
    Ok(f)
}

fn small_sample_warning(n: u64) -> Vec<String> {
    if n < SMALL_SAMPLE {
        vec![format!("n = {n} < {SMALL_SAMPLE}: the asymptotic approximation may be poor (heuristic threshold)")]
    } else {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    pub level: f64,
    pub rate: f64,
    pub variance: f64,
    pub n: u64,
    pub case: String,
    pub warnings: Vec<String>,
}

/// Two-sided interval `Ñ_n ± z·sqrt(Ñ_n(1 − Ñ_n)·σ²)/n^{rate}`, clipped to `[0, 1]`.
pub fn confidence_interval_from_means(nw: &[f64], n: u64, spec: &SpectralData, p: &Params, level: f64) -> Result<ConfidenceInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(InferenceError::Parameter(format!("level {level} outside (0, 1)")));
    }
    let center = plug_in(nw, spec)?;
    let factor = variance_factor(center)?;
    let cov = covariance_ntilde(spec, p)?;
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let half = z * (factor * cov.scalar()).sqrt() / (n as f64).powf(cov.rate);
    Ok(ConfidenceInterval {
        lo: (center - half).max(0.0),
        hi: (center + half).min(1.0),
        center,
        level,
        rate: cov.rate,
        variance: cov.scalar(),
        n,
        case: cov.tag,
        warnings: small_sample_warning(n),
    })
}

pub fn confidence_interval(rec: &ActionRecord, w: &WeightSchedule, spec: &SpectralData, p: &Params, level: f64) -> Result<ConfidenceInterval> {
    let n = rec.steps();
    confidence_interval_from_means(&weighted_means(rec, w, n)?, n, spec, p, level)
}

/// Whitening of the fluctuation part through the `N − 1` nonzero eigen-directions
/// of its real covariance `Ũ_{−1} M Ũ_{−1}ᵀ`.
#[derive(Debug, Clone)]
pub struct Whitener {
    /// Columns are the retained eigenvectors.
    pub basis: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub rate: f64,
    pub case: String,
}

impl Whitener {
    pub fn new(spec: &SpectralData, p: &Params) -> Result<Self> {
        let cov = covariance_nprime(spec, p)?;
        let n = spec.n_agents();
        let eig = SymmetricEigen::new(cov.matrix.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let keep = &order[..n - 1];
        let top = eig.eigenvalues[order[0]].abs().max(f64::MIN_POSITIVE);
        let smallest = keep.iter().map(|&i| eig.eigenvalues[i]).fold(f64::INFINITY, f64::min);
        if n > 1 && !(smallest > WHITENING_TOL * top) {
            return Err(InferenceError::SingularWhitening(smallest / top));
        }
        let basis = DMatrix::from_fn(n, n - 1, |r, c| eig.eigenvectors[(r, keep[c])]);
        Ok(Self { basis, eigenvalues: keep.iter().map(|&i| eig.eigenvalues[i]).collect(), rate: cov.rate, case: cov.tag })
    }

    /// Standardized coordinates `Λ^{−1/2} Eᵀ x`.
    pub fn whiten(&self, x: &[f64]) -> Vec<f64> {
        let v = self.basis.transpose() * DVector::from_column_slice(x);
        v.iter().zip(&self.eigenvalues).map(|(a, l)| a / l.sqrt()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub n_used: u64,
    pub plug_in_ntilde: f64,
    pub case: String,
    pub warnings: Vec<String>,
}

fn chi_square_report(statistic: f64, dof: usize, n: u64, ntilde: f64, case: String) -> Result<TestReport> {
    let dist = ChiSquared::new(dof as f64).map_err(|e| InferenceError::Parameter(e.to_string()))?;
    Ok(TestReport { statistic, dof, p_value: dist.sf(statistic), n_used: n, plug_in_ntilde: ntilde, case, warnings: small_sample_warning(n) })
}

/// General χ² statistic `n^ν · |whitened N′_n|² / (Ñ_n(1 − Ñ_n))` with `N − 1` degrees of freedom.
pub fn chi_square_from_means(nw: &[f64], n: u64, spec: &SpectralData, whitener: &Whitener) -> Result<TestReport> {
    let ntilde = plug_in(nw, spec)?;
    let factor = variance_factor(ntilde)?;
    let nprime: Vec<f64> = nw.iter().map(|x| x - ntilde).collect();
    let scale = (n as f64).powf(2.0 * whitener.rate);
    let stat = whitener.whiten(&nprime).iter().map(|t| t * t).sum::<f64>() * scale / factor;
    chi_square_report(stat, spec.n_agents() - 1, n, ntilde, whitener.case.clone())
}

pub fn chi_square_w_test(rec: &ActionRecord, w: &WeightSchedule, spec: &SpectralData, p: &Params) -> Result<TestReport> {
    let n = rec.steps();
    let whitener = Whitener::new(spec, p)?;
    chi_square_from_means(&weighted_means(rec, w, n)?, n, spec, &whitener)
}

/// Mean-field form `n^ν N_nᵀ(I − 11ᵀ/N)N_n / (Ñ_n(1 − Ñ_n) s*)` for `W = (α/N)11ᵀ + (1 − α)I`.
pub fn chi_square_mean_field(nw: &[f64], n: u64, alpha: f64, p: &Params) -> Result<TestReport> {
    let k = nw.len();
    if k < 2 {
        return Err(InferenceError::Parameter("the mean-field test needs at least two agents".into()));
    }
    let mean = nw.iter().sum::<f64>() / k as f64;
    let factor = variance_factor(mean)?;
    let s = mf::s_star(alpha, p)?;
    if !(s > 0.0) {
        return Err(InferenceError::SingularWhitening(s));
    }
    let quad: f64 = nw.iter().map(|x| (x - mean).powi(2)).sum();
    let stat = (n as f64).powf(p.nu) * quad / (factor * s);
    chi_square_report(stat, k - 1, n, mean, "mean-field".into())
}
