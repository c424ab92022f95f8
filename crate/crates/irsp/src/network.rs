//! Weighted interaction networks and their biorthogonal eigensystems.
//!
//! Entry `w[(h, j)]` is the influence of agent `h` on agent `j`; columns sum
//! to one. The left eigenvectors `u_j` satisfy `u_jᵀ W = λ_j u_jᵀ` and the
//! right eigenvectors are the columns of `(Ũᵀ)⁻¹`.

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

pub type C64 = Complex<f64>;

/// Column sums must equal one within this tolerance.
pub const COLUMN_SUM_TOL: f64 = 1e-12;
/// Eigenvector matrices with a larger condition estimate count as defective.
pub const CONDITION_CAP: f64 = 1e8;
/// Maximum accepted eigen-residual `‖Wᵀu − λu‖`.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-10;
const CLUSTER_TOL: f64 = 1e-7;
const SCHUR_TOL: f64 = 1e-14;
const SCHUR_MAX_ITER: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("matrix must be square and non-empty, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("entry ({row}, {col}) = {value} is negative")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("column {column} sums to {sum}, expected 1")]
    ColumnNotStochastic { column: usize, sum: f64 },
    #[error("graph is reducible: vertex {to} is not reachable from vertex {from}")]
    Reducible { from: usize, to: usize },
    #[error("matrix is not diagonalizable (eigenvector condition estimate {condition:.3e})")]
    NotDiagonalizable { condition: f64 },
    #[error("mean-field alpha {0} outside (0, 1]")]
    AlphaOutOfRange(f64),
    #[error("mean-field network needs at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("eigensolver failure: residual {residual:.3e} for eigenvalue index {index}")]
    EigensolverFailure { index: usize, residual: f64 },
    #[error("network csv, line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A validated column-stochastic, irreducible, diagonalizable interaction matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNetwork {
    weights: DMatrix<f64>,
    condition: f64,
}

impl WeightedNetwork {
    pub fn n_agents(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Condition estimate `‖Ũ‖_F ‖Ũ⁻¹‖_F` found during validation.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// CSV rendering, one row of `W` per line.
    pub fn to_csv(&self) -> String {
        let n = self.n_agents();
        let mut out = String::new();
        for h in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{:?}", self.weights[(h, j)])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Parse a network CSV: line `h` holds row `h` of `W`, comma separated.
pub fn parse_network_csv(text: &str) -> Result<DMatrix<f64>, NetworkError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| NetworkError::Parse {
            line: e.position().map_or(idx + 1, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        let row = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>().map_err(|_| NetworkError::Parse {
                    line,
                    message: format!("cannot parse {cell:?} as a real number"),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(NetworkError::Parse {
                    line,
                    message: format!("expected {} fields, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(NetworkError::NotSquare { rows: 0, cols: 0 });
    }
    let cols = rows[0].len();
    if rows.len() != cols {
        return Err(NetworkError::NotSquare { rows: rows.len(), cols });
    }
    Ok(DMatrix::from_fn(cols, cols, |h, j| rows[h][j]))
}

/// Validate a raw matrix, reporting the first failed invariant.
pub fn validate_network(raw: DMatrix<f64>) -> Result<WeightedNetwork, NetworkError> {
    let (rows, cols) = raw.shape();
    if rows == 0 || rows != cols {
        return Err(NetworkError::NotSquare { rows, cols });
    }
    for h in 0..rows {
        for j in 0..cols {
            let value = raw[(h, j)];
            if !value.is_finite() {
                return Err(NetworkError::NonFinite { row: h, col: j });
            }
            if value < 0.0 {
                return Err(NetworkError::NegativeEntry { row: h, col: j, value });
            }
        }
    }
    for j in 0..cols {
        let sum: f64 = raw.column(j).iter().sum();
        if (sum - 1.0).abs() > COLUMN_SUM_TOL {
            return Err(NetworkError::ColumnNotStochastic { column: j, sum });
        }
    }
    check_strongly_connected(&raw)?;
    let (_, _, _, condition) = eigensystem(&raw)?;
    if !(condition < CONDITION_CAP) {
        return Err(NetworkError::NotDiagonalizable { condition });
    }
    Ok(WeightedNetwork { weights: raw, condition })
}

fn check_strongly_connected(w: &DMatrix<f64>) -> Result<(), NetworkError> {
    let n = w.nrows();
    let reach = |forward: bool| -> Vec<bool> {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(a) = stack.pop() {
            for b in 0..n {
                let weight = if forward { w[(a, b)] } else { w[(b, a)] };
                if weight > 0.0 && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen
    };
    if let Some(to) = reach(true).iter().position(|s| !s) {
        return Err(NetworkError::Reducible { from: 0, to });
    }
    if let Some(from) = reach(false).iter().position(|s| !s) {
        return Err(NetworkError::Reducible { from, to: 0 });
    }
    Ok(())
}

/// Mean-field interaction `w = α/N + (1−α)δ`.
pub fn mean_field(n: usize, alpha: f64) -> Result<WeightedNetwork, NetworkError> {
    if n < 2 {
        return Err(NetworkError::TooFewAgents(n));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(NetworkError::AlphaOutOfRange(alpha));
    }
    let off = alpha / n as f64;
    let raw = DMatrix::from_fn(n, n, |a, b| if a == b { off + (1.0 - alpha) } else { off });
    validate_network(raw)
}

/// Eigenvalues, left and right eigenvectors of a validated network.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub eigenvalues: Vec<C64>,
    /// Columns are the unit-norm left eigenvectors `u_j`.
    pub left: DMatrix<C64>,
    /// Columns are the right eigenvectors `v_j`, biorthogonal to `left`.
    pub right: DMatrix<C64>,
    /// `α_j = 1 − λ_j`; the first entry is zero.
    pub alphas: Vec<C64>,
    pub lambda_star: Option<C64>,
    pub a_star: Option<f64>,
    pub condition: f64,
    /// Real part of `v_1`, entrywise positive.
    pub v1: Vec<f64>,
}

impl SpectralData {
    pub fn n_agents(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn v1_norm_sq(&self) -> f64 {
        self.v1.iter().map(|x| x * x).sum()
    }

    /// Bilinear (non-conjugated) product `v_aᵀ v_b`.
    pub fn vtv(&self, a: usize, b: usize) -> C64 {
        self.right.column(a).iter().zip(self.right.column(b).iter()).map(|(x, y)| x * y).sum()
    }

    /// Gram matrix of bilinear products `v_aᵀ v_b`.
    pub fn right_gram(&self) -> DMatrix<C64> {
        self.right.transpose() * &self.right
    }

    pub fn summary(&self) -> SpectralSummary {
        let pair = |z: &C64| [z.re, z.im];
        let cols = |m: &DMatrix<C64>| -> Vec<Vec<[f64; 2]>> {
            m.column_iter().map(|c| c.iter().map(pair).collect()).collect()
        };
        SpectralSummary {
            n_agents: self.n_agents(),
            eigenvalues: self.eigenvalues.iter().map(pair).collect(),
            lambda_star: self.lambda_star.as_ref().map(pair),
            a_star: self.a_star,
            v1: self.v1.clone(),
            v1_norm_sq: self.v1_norm_sq(),
            condition_estimate: self.condition,
            left_vectors: cols(&self.left),
            right_vectors: cols(&self.right),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralSummary {
    pub n_agents: usize,
    pub eigenvalues: Vec<[f64; 2]>,
    pub lambda_star: Option<[f64; 2]>,
    pub a_star: Option<f64>,
    pub v1: Vec<f64>,
    pub v1_norm_sq: f64,
    pub condition_estimate: f64,
    pub left_vectors: Vec<Vec<[f64; 2]>>,
    pub right_vectors: Vec<Vec<[f64; 2]>>,
}

/// Biorthogonal eigen-decomposition with `λ_1 = 1` first, the rest by
/// descending real part and then descending imaginary part.
pub fn spectral_decompose(net: &WeightedNetwork) -> Result<SpectralData, NetworkError> {
    let (eigenvalues, left, right, condition) = eigensystem(&net.weights)?;
    if !(condition < CONDITION_CAP) {
        return Err(NetworkError::NotDiagonalizable { condition });
    }
    let n = eigenvalues.len();
    let wt = net.weights.transpose().map(|x| C64::new(x, 0.0));
    for (index, lambda) in eigenvalues.iter().enumerate() {
        let u = left.column(index);
        let residual = (&wt * u - u * *lambda).norm();
        if !(residual < EIGEN_RESIDUAL_TOL) {
            return Err(NetworkError::EigensolverFailure { index, residual });
        }
    }
    let alphas: Vec<C64> = eigenvalues.iter().map(|l| C64::new(1.0, 0.0) - l).collect();
    let lambda_star = eigenvalues.get(1).copied();
    let a_star = lambda_star.map(|l| 1.0 - l.re);
    let v1: Vec<f64> = right.column(0).iter().map(|z| z.re).collect();
    if right.column(0).iter().any(|z| z.im.abs() > 1e-10) || v1.iter().any(|&x| x <= 0.0) || n == 0 {
        return Err(NetworkError::EigensolverFailure { index: 0, residual: f64::NAN });
    }
    Ok(SpectralData { eigenvalues, left, right, alphas, lambda_star, a_star, condition, v1 })
}

type Eigensystem = (Vec<C64>, DMatrix<C64>, DMatrix<C64>, f64);

fn eigensystem(w: &DMatrix<f64>) -> Result<Eigensystem, NetworkError> {
    let n = w.nrows();
    let wt = w.transpose();
    // The default tolerance (machine epsilon) never converges on some matrices with
    // repeated eigenvalues; accuracy is enforced later by the residual check.
    let raw = nalgebra::linalg::Schur::try_new(wt.clone(), SCHUR_TOL, SCHUR_MAX_ITER)
        .ok_or(NetworkError::EigensolverFailure { index: 0, residual: f64::NAN })?
        .complex_eigenvalues();

    // Sort, cluster near-equal values, and pin the Perron root to exactly one.
    let mut values: Vec<C64> = raw.iter().copied().collect();
    let perron = values
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - C64::new(1.0, 0.0)).norm().total_cmp(&(b.1 - C64::new(1.0, 0.0)).norm()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    values.remove(perron);
    values.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let mut clusters: Vec<Vec<C64>> = Vec::new();
    for v in values {
        match clusters.last_mut() {
            Some(c) if (c[0] - v).norm() < CLUSTER_TOL * v.norm().max(1.0) => c.push(v),
            _ => clusters.push(vec![v]),
        }
    }
    // Merge clusters that are not adjacent in the sort order but coincide.
    let mut merged: Vec<Vec<C64>> = Vec::new();
    for c in clusters {
        if let Some(existing) = merged
            .iter_mut()
            .find(|m| (m[0] - c[0]).norm() < CLUSTER_TOL * c[0].norm().max(1.0))
        {
            existing.extend(c);
        } else {
            merged.push(c);
        }
    }

    let mut eigenvalues = vec![C64::new(1.0, 0.0)];
    let mut left = DMatrix::<C64>::zeros(n, n);
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    for h in 0..n {
        left[(h, 0)] = C64::new(inv_sqrt_n, 0.0);
    }
    let mut col = 1;
    let mut pending_conj: Vec<(C64, Vec<DVector<C64>>)> = Vec::new();
    for cluster in &merged {
        let m = cluster.len();
        let mean = cluster.iter().sum::<C64>() / m as f64;
        let real = mean.im.abs() < CLUSTER_TOL;
        let lambda = if real { C64::new(mean.re, 0.0) } else { mean };
        let vectors: Vec<DVector<C64>> = if real {
            null_space_real(&wt, lambda.re, m)
        } else if lambda.im < 0.0 {
            // Conjugate partner of a cluster already handled.
            if let Some(pos) = pending_conj.iter().position(|(l, _)| (l.conj() - lambda).norm() < CLUSTER_TOL) {
                let (_, vs) = pending_conj.remove(pos);
                vs.iter().map(|v| v.map(|z| z.conj())).collect()
            } else {
                null_space_complex(&wt, lambda, m)
            }
        } else {
            let vs = null_space_complex(&wt, lambda, m);
            pending_conj.push((lambda, vs.clone()));
            vs
        };
        let wtc = wt.map(|x| C64::new(x, 0.0));
        for v in vectors {
            if col >= n {
                break;
            }
            let residual = (&wtc * &v - &v * lambda).norm();
            if !(residual < EIGEN_RESIDUAL_TOL) {
                return Err(if m > 1 {
                    NetworkError::NotDiagonalizable { condition: f64::INFINITY }
                } else {
                    NetworkError::EigensolverFailure { index: col, residual }
                });
            }
            left.set_column(col, &v);
            eigenvalues.push(lambda);
            col += 1;
        }
    }
    if col != n {
        return Err(NetworkError::NotDiagonalizable { condition: f64::INFINITY });
    }
    let right = match left.transpose().try_inverse() {
        Some(inv) => inv,
        None => return Err(NetworkError::NotDiagonalizable { condition: f64::INFINITY }),
    };
    let condition = left.norm() * right.norm();
    if !condition.is_finite() {
        return Err(NetworkError::NotDiagonalizable { condition: f64::INFINITY });
    }
    Ok((eigenvalues, left, right, condition))
}

/// Orthonormal basis of the `m` smallest right singular directions of `Wᵀ − λI`.
fn null_space_real(wt: &DMatrix<f64>, lambda: f64, m: usize) -> Vec<DVector<C64>> {
    let n = wt.nrows();
    let a = wt - DMatrix::<f64>::identity(n, n) * lambda;
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]).then(x.cmp(&y)));
    order
        .into_iter()
        .take(m)
        .map(|i| fix_phase(v_t.row(i).transpose().map(|x| C64::new(x, 0.0))))
        .collect()
}

fn null_space_complex(wt: &DMatrix<f64>, lambda: C64, m: usize) -> Vec<DVector<C64>> {
    let n = wt.nrows();
    let a = wt.map(|x| C64::new(x, 0.0)) - DMatrix::<C64>::identity(n, n) * lambda;
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]).then(x.cmp(&y)));
    order
        .into_iter()
        .take(m)
        .map(|i| fix_phase(v_t.row(i).adjoint()))
        .collect()
}

/// Unit norm, with the largest-modulus entry rotated onto the positive real axis.
fn fix_phase(v: DVector<C64>) -> DVector<C64> {
    let norm = v.norm();
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let pivot = v.iter().find(|z| z.norm() >= max * (1.0 - 1e-9)).copied().unwrap_or(C64::new(1.0, 0.0));
    let rot = pivot.conj() / pivot.norm();
    v.map(|z| z * rot / norm)
}

/// Outcome of the CLT assumption checks.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AssumptionReport {
    pub passed: bool,
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
}

/// Check the exponent and eigenvalue conditions under which the CLTs hold.
pub fn check_clt_assumptions(spec: &SpectralData, gamma: f64, c: f64, nu: f64, q: f64) -> AssumptionReport {
    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    for (name, value) in [("gamma", gamma), ("nu", nu)] {
        if !(value > 0.5 && value <= 1.0) {
            failures.push(format!("{name} = {value} outside (1/2, 1]"));
        }
    }
    if !(c > 0.0) {
        failures.push(format!("c = {c} must be positive"));
    }
    if !(q > 0.0) {
        failures.push(format!("q = {q} must be positive"));
    }
    if is_one(gamma) {
        if let Some(a_star) = spec.a_star {
            if !(c > 1.0 / (2.0 * a_star)) {
                failures.push(format!(
                    "gamma = 1 requires c > 1/(2(1 - Re lambda*)) = {:.6}, got c = {c}",
                    1.0 / (2.0 * a_star)
                ));
            }
        }
    }
    if is_one(nu) && !(q > 0.5) {
        failures.push(format!("nu = 1 requires q > 1/2, got q = {q}"));
    }
    if (nu - gamma).abs() < EXPONENT_TOL {
        for (j, alpha) in spec.alphas.iter().enumerate().skip(1) {
            if (C64::new(q, 0.0) - alpha * c).norm() < 1e-9 {
                warnings.push(format!(
                    "q = c*alpha_{} = {q}: covariance formulas are used outside their proven range",
                    j + 1
                ));
            }
        }
    }
    AssumptionReport { passed: failures.is_empty(), failures, warnings }
}

/// Exponent comparisons (`ν = γ`, `γ = 1`) use this tolerance.
pub const EXPONENT_TOL: f64 = 1e-12;

pub(crate) fn is_one(x: f64) -> bool {
    (x - 1.0).abs() < EXPONENT_TOL
}
