//! Asymptotic covariance matrices and rates of the inclinations, the weighted
//! empirical means, their common component `Ñ_n` and fluctuation part `N′_n`.
//!
//! Every covariance follows the convention that the full asymptotic
//! covariance equals `Z∞(1 − Z∞)` times the stored matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::network::{is_one, SpectralData, C64, EXPONENT_TOL};
use crate::schedules::{classify_regime, CaseNprime, CaseNtilde, CaseY, RSchedule, Regime, ScheduleError, WeightSchedule};

/// Denominators below this magnitude are rejected.
pub const DENOMINATOR_TOL: f64 = 1e-10;
/// Imaginary residue tolerated when realifying an assembled covariance.
pub const IMAG_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsymptoticsError {
    #[error("denominator {factor} = {value} is numerically zero")]
    DenominatorNearZero { factor: String, value: f64 },
    #[error("assembled covariance has imaginary residue {0}")]
    ImaginaryResidual(f64),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

type Result<T> = std::result::Result<T, AsymptoticsError>;

/// Leading-order constants of the two step sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Params {
    pub c: f64,
    pub gamma: f64,
    pub q: f64,
    pub nu: f64,
}

impl Params {
    pub fn new(c: f64, gamma: f64, q: f64, nu: f64) -> Self {
        Self { c, gamma, q, nu }
    }

    pub fn from_schedules(r: &RSchedule, w: &WeightSchedule) -> Self {
        Self { c: r.c, gamma: r.gamma, q: w.q, nu: w.nu }
    }

    pub fn regime(&self) -> Result<Regime> {
        Ok(classify_regime(self.gamma, self.nu)?)
    }

    fn gamma_is_1(&self) -> bool {
        is_one(self.gamma)
    }

    fn nu_is_1(&self) -> bool {
        is_one(self.nu)
    }
}

fn guard(factor: &str, value: C64) -> Result<C64> {
    if value.norm() < DENOMINATOR_TOL {
        return Err(AsymptoticsError::DenominatorNearZero { factor: factor.to_string(), value: value.norm() });
    }
    Ok(value)
}

fn guard_re(factor: &str, value: f64) -> Result<f64> {
    guard(factor, C64::new(value, 0.0)).map(|v| v.re)
}

fn ind(flag: bool) -> f64 {
    if flag {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaGamma {
    pub value: f64,
    /// Attained for doubly stochastic networks.
    pub lower: f64,
    pub upper: f64,
}

/// `σ̃²_γ = ‖v_1‖² c² / (N(2γ − 1))` with its network-free bounds.
pub fn sigma_tilde_gamma_sq(spec: &SpectralData, c: f64, gamma: f64) -> Result<SigmaGamma> {
    if !(gamma > 0.5 && gamma <= 1.0) {
        return Err(ScheduleError::ExponentOutOfRange(gamma).into());
    }
    let n = spec.n_agents() as f64;
    let base = c * c / (2.0 * gamma - 1.0);
    Ok(SigmaGamma { value: spec.v1_norm_sq() * base / n, lower: base / n, upper: base })
}

/// `σ̃²` of the common component; `None` where it is not defined (`γ0 < ν < 1`).
pub fn sigma_tilde_sq(spec: &SpectralData, p: &Params) -> Result<Option<f64>> {
    let regime = p.regime()?;
    let scale = spec.v1_norm_sq() / spec.n_agents() as f64;
    let v = match regime.case_y {
        CaseY::A | CaseY::C => p.q / 2.0,
        CaseY::D => (p.q - p.c).powi(2) / guard_re("2q - 1", 2.0 * p.q - 1.0)?,
        CaseY::E => p.c * p.c / guard_re("2q - (2gamma - 1)", 2.0 * p.q - (2.0 * p.gamma - 1.0))?,
        CaseY::B => return Ok(None),
    };
    Ok(Some(scale * v))
}

/// `[S^(q)]_{j1 j2} = (q/2) v_{j1}ᵀ v_{j2}`.
pub fn matrix_sq(spec: &SpectralData, q: f64) -> DMatrix<C64> {
    spec.right_gram() * C64::new(q / 2.0, 0.0)
}

/// The four blocks of the joint covariance when `ν = γ`, in indicator form.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseDBlocks {
    pub s11: DMatrix<C64>,
    pub s12: DMatrix<C64>,
    pub s21: DMatrix<C64>,
    pub s22: DMatrix<C64>,
}

/// Off-corner entry of the `(2,2)` block shared by the joint and the `N′` covariances.
fn s22_entry(a1: C64, a2: C64, c: f64, q: f64, ind_g: f64) -> Result<C64> {
    let d_sum = guard("c(a1 + a2) - 1{gamma=1}", (a1 + a2) * c - ind_g)?;
    let d1 = guard("c a1 + q - 1{gamma=1}", a1 * c + (q - ind_g))?;
    let d2 = guard("c a2 + q - 1{gamma=1}", a2 * c + (q - ind_g))?;
    let d_q = guard_re("2q - 1{gamma=1}", 2.0 * q - ind_g)?;
    let first = (a1 + a2) * c.powi(3) + (a1 * a2 + 1.0) * (2.0 * c * c * q)
        - (a1 * a2 + a1 + a2 + 2.0) * (ind_g * c * c);
    let second = (a1 + a2) * (c * (q - ind_g).powi(2)) - ind_g * (2.0 * c + q - 1.0) * (q - 1.0);
    Ok((first + second) * (q * q) / (d_sum * d1 * d2 * d_q))
}

pub fn matrices_case_d(spec: &SpectralData, c: f64, q: f64, gamma_is_1: bool) -> Result<CaseDBlocks> {
    let n = spec.n_agents();
    let ig = ind(gamma_is_1);
    let al = &spec.alphas;
    let zero = C64::new(0.0, 0.0);
    let mut s11 = DMatrix::from_element(n, n, zero);
    let mut s12 = DMatrix::from_element(n, n, zero);
    let mut s22 = DMatrix::from_element(n, n, zero);
    let d_q = guard_re("2q - 1{gamma=1}", 2.0 * q - ig)?;
    s22[(0, 0)] = C64::new((q - c).powi(2) / d_q * spec.v1_norm_sq(), 0.0);
    for j in 1..n {
        let dj = guard("c alpha_j + q - 1{gamma=1}", al[j] * c + (q - ig))?;
        s12[(j, 0)] = spec.vtv(j, 0) * (c * (q - c)) / dj;
        let side = spec.vtv(j, 0) * (q * (q - c) * (c + q - ig)) / (dj * d_q);
        s22[(j, 0)] = side;
        s22[(0, j)] = side;
    }
    for j1 in 1..n {
        for j2 in 1..n {
            let vv = spec.vtv(j1, j2);
            let d_sum = guard("c(a1 + a2) - 1{gamma=1}", (al[j1] + al[j2]) * c - ig)?;
            let d1 = guard("c alpha_j + q - 1{gamma=1}", al[j1] * c + (q - ig))?;
            s11[(j1, j2)] = vv * (c * c) / d_sum;
            s12[(j1, j2)] = vv * (al[j1] * c + (c - ig)) * (c * q) / (d_sum * d1);
            s22[(j1, j2)] = vv * s22_entry(al[j1], al[j2], c, q, ig)?;
        }
    }
    let s21 = s12.transpose();
    Ok(CaseDBlocks { s11, s12, s21, s22 })
}

/// Literal transcription of the `ν = γ = 1` blocks with every indicator set to 1,
/// kept separate from [`matrices_case_d`] so the two can be cross-checked.
pub fn matrices_case_d_at_one(spec: &SpectralData, c: f64, q: f64) -> Result<CaseDBlocks> {
    let n = spec.n_agents();
    let al = &spec.alphas;
    let zero = C64::new(0.0, 0.0);
    let mut s11 = DMatrix::from_element(n, n, zero);
    let mut s12 = DMatrix::from_element(n, n, zero);
    let mut s22 = DMatrix::from_element(n, n, zero);
    s22[(0, 0)] = C64::new((q - c).powi(2) / guard_re("2q - 1", 2.0 * q - 1.0)? * spec.v1_norm_sq(), 0.0);
    for j in 1..n {
        let den = guard("c alpha_j + q - 1", al[j] * c + q - 1.0)?;
        s12[(j, 0)] = spec.vtv(j, 0) * c * (q - c) / den;
        let v = spec.vtv(j, 0) * q * (q - c) * (c + q - 1.0) / (den * (2.0 * q - 1.0));
        s22[(j, 0)] = v;
        s22[(0, j)] = v;
    }
    for j1 in 1..n {
        for j2 in 1..n {
            let (a1, a2) = (al[j1], al[j2]);
            let vv = spec.vtv(j1, j2);
            let dd = guard("c(a1 + a2) - 1", c * (a1 + a2) - 1.0)?;
            let d1 = guard("c a1 + q - 1", c * a1 + q - 1.0)?;
            let d2 = guard("c a2 + q - 1", c * a2 + q - 1.0)?;
            s11[(j1, j2)] = vv * c * c / dd;
            s12[(j1, j2)] = vv * c * q * (c * a1 + c - 1.0) / ((c * a1 + c * a2 - 1.0) * d1);
            let den = (2.0 * q - 1.0) * dd * d1 * d2;
            let t1 = c.powi(3) * (a1 + a2) + 2.0 * c * c * q * (a1 * a2 + 1.0) - c * c * (a1 * a2 + a1 + a2 + 2.0);
            let t2 = c * (q - 1.0).powi(2) * (a1 + a2) - (2.0 * c + q - 1.0) * (q - 1.0);
            s22[(j1, j2)] = vv * q * q * (t1 + t2) / den;
        }
    }
    let s21 = s12.transpose();
    Ok(CaseDBlocks { s11, s12, s21, s22 })
}

/// `S_γ^{22}`; entries in row or column 1 are left at zero.
pub fn matrix_s_gamma22(spec: &SpectralData, c: f64, q: f64, gamma_is_1: bool) -> Result<DMatrix<C64>> {
    let n = spec.n_agents();
    let ig = ind(gamma_is_1);
    let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for j1 in 1..n {
        for j2 in 1..n {
            m[(j1, j2)] = spec.vtv(j1, j2) * s22_entry(spec.alphas[j1], spec.alphas[j2], c, q, ig)?;
        }
    }
    Ok(m)
}

/// `S` of the `ν > γ` regime; entries in row or column 1 are left at zero.
pub fn matrix_s_nu_gt_gamma(spec: &SpectralData, q: f64, gamma: f64, nu_is_1: bool) -> Result<DMatrix<C64>> {
    let n = spec.n_agents();
    let inu = ind(nu_is_1);
    let d_a = guard_re("2q - 1{nu=1}(2gamma - 1)", 2.0 * q - inu * (2.0 * gamma - 1.0))?;
    let d_b = guard_re("2q - 1{nu=1}gamma", 2.0 * q - inu * gamma)?;
    let d_c = guard_re("2q - 1{nu=1}", 2.0 * q - inu)?;
    let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for j1 in 1..n {
        for j2 in 1..n {
            let a1 = guard("alpha_j", spec.alphas[j1])?;
            let a2 = guard("alpha_j", spec.alphas[j2])?;
            let r1 = spec.eigenvalues[j1] / a1;
            let r2 = spec.eigenvalues[j2] / a2;
            let bracket = r1 * r2 / d_a + (r1 + r2) / d_b + 1.0 / d_c;
            m[(j1, j2)] = spec.vtv(j1, j2) * bracket * (q * q);
        }
    }
    Ok(m)
}

/// A covariance with its normalization exponent and provenance tag.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceSpec {
    /// Power of `n` multiplying the centered quantity.
    pub rate: f64,
    /// Real symmetric matrix; `1×1` for the common component.
    #[serde(serialize_with = "serialize_rows")]
    pub matrix: DMatrix<f64>,
    pub tag: String,
    /// Smallest eigenvalue of `matrix`, for the semidefiniteness check.
    pub min_eigenvalue: f64,
}

fn serialize_rows<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    serde::Serialize::serialize(&rows, s)
}

impl CovarianceSpec {
    fn new(rate: f64, complex: DMatrix<C64>, tag: String) -> Result<Self> {
        let sym = (&complex + complex.adjoint()) * C64::new(0.5, 0.0);
        let scale = sym.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let imag = sym.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let raw_imag = complex.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let worst = imag.max(raw_imag);
        if worst > IMAG_TOL * scale {
            return Err(AsymptoticsError::ImaginaryResidual(worst));
        }
        let matrix = sym.map(|z| z.re);
        let min_eigenvalue = if matrix.nrows() == 0 {
            0.0
        } else {
            SymmetricEigen::new(matrix.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
        };
        Ok(Self { rate, matrix, tag, min_eigenvalue })
    }

    /// Semidefinite within `1e-9` relative to the largest entry.
    pub fn is_psd(&self) -> bool {
        let scale = self.matrix.iter().map(|x| x.abs()).fold(1.0, f64::max);
        self.min_eigenvalue > -1e-9 * scale
    }

    pub fn scalar(&self) -> f64 {
        self.matrix[(0, 0)]
    }
}

fn ones(n: usize) -> DMatrix<C64> {
    DMatrix::from_element(n, n, C64::new(1.0, 0.0))
}

/// `Ũ M Ũᵀ` with the bilinear transpose.
fn sandwich(u: &DMatrix<C64>, m: &DMatrix<C64>) -> DMatrix<C64> {
    u * m * u.transpose()
}

fn u_minus_1(spec: &SpectralData) -> DMatrix<C64> {
    let mut u = spec.left.clone();
    u.column_mut(0).fill(C64::new(0.0, 0.0));
    u
}

/// Joint covariance of `(Z_n, N_n)` (a `2N × 2N` matrix).
pub fn covariance_y(spec: &SpectralData, p: &Params) -> Result<CovarianceSpec> {
    let regime = p.regime()?;
    let n = spec.n_agents();
    let u = &spec.left;
    let sg = sigma_tilde_gamma_sq(spec, p.c, p.gamma)?.value;
    let zero = C64::new(0.0, 0.0);
    let mut full = DMatrix::from_element(2 * n, 2 * n, zero);
    let add_nn = |full: &mut DMatrix<C64>, block: &DMatrix<C64>| {
        let mut v = full.view_mut((n, n), (n, n));
        v += block;
    };
    let tag;
    match regime.case_y {
        CaseY::A => {
            add_nn(&mut full, &sandwich(u, &matrix_sq(spec, p.q)));
            tag = "joint (a)";
        }
        CaseY::B => {
            full += ones(2 * n) * C64::new(sg, 0.0);
            tag = "joint (b)";
        }
        CaseY::C => {
            full += ones(2 * n) * C64::new(sg, 0.0);
            add_nn(&mut full, &sandwich(u, &matrix_sq(spec, p.q)));
            tag = "joint (c)";
        }
        CaseY::D => {
            full += ones(2 * n) * C64::new(sg, 0.0);
            let b = matrices_case_d(spec, p.c, p.q, true)?;
            full.view_mut((0, 0), (n, n)).add_assign_from(&sandwich(u, &b.s11));
            full.view_mut((0, n), (n, n)).add_assign_from(&sandwich(u, &b.s12));
            full.view_mut((n, 0), (n, n)).add_assign_from(&sandwich(u, &b.s21));
            add_nn(&mut full, &sandwich(u, &b.s22));
            tag = "joint (d)";
        }
        CaseY::E => {
            full += ones(2 * n) * C64::new(sg, 0.0);
            let extra = spec.v1_norm_sq() * p.c * p.c
                / (n as f64 * guard_re("2q - (2gamma - 1)", 2.0 * p.q - (2.0 * p.gamma - 1.0))?);
            add_nn(&mut full, &(ones(n) * C64::new(extra, 0.0)));
            tag = "joint (e)";
        }
    }
    CovarianceSpec::new(regime.rate_y, full, tag.to_string())
}

trait AddAssignFrom {
    fn add_assign_from(self, other: &DMatrix<C64>);
}

impl AddAssignFrom for nalgebra::DMatrixViewMut<'_, C64> {
    fn add_assign_from(mut self, other: &DMatrix<C64>) {
        self += other;
    }
}

/// Scalar covariance of the common component `Ñ_n`.
pub fn covariance_ntilde(spec: &SpectralData, p: &Params) -> Result<CovarianceSpec> {
    let regime = p.regime()?;
    let sg = sigma_tilde_gamma_sq(spec, p.c, p.gamma)?.value;
    let (v, tag) = match regime.case_ntilde {
        CaseNtilde::A => (sigma_tilde_sq(spec, p)?.unwrap_or(0.0), "common (a)"),
        CaseNtilde::B => (sg, "common (b)"),
        CaseNtilde::C => (sg + sigma_tilde_sq(spec, p)?.unwrap_or(0.0), "common (c)"),
    };
    CovarianceSpec::new(regime.rate_ntilde, DMatrix::from_element(1, 1, C64::new(v, 0.0)), tag.to_string())
}

/// The inner matrix `M` of the fluctuation covariance `Ũ_{−1} M Ũ_{−1}ᵀ`.
pub fn nprime_inner(spec: &SpectralData, p: &Params) -> Result<(DMatrix<C64>, CaseNprime)> {
    let regime = p.regime()?;
    let m = match regime.case_nprime {
        CaseNprime::NuBelowGamma => matrix_sq(spec, p.q),
        CaseNprime::NuEqualsGamma => matrix_s_gamma22(spec, p.c, p.q, p.gamma_is_1())?,
        CaseNprime::NuAboveGamma => matrix_s_nu_gt_gamma(spec, p.q, p.gamma, p.nu_is_1())?,
    };
    Ok((m, regime.case_nprime))
}

/// Covariance of the fluctuation part `N′_n = (I − u_1 v_1ᵀ) N_n`, always at rate `ν/2`.
pub fn covariance_nprime(spec: &SpectralData, p: &Params) -> Result<CovarianceSpec> {
    let (m, case) = nprime_inner(spec, p)?;
    let tag = match case {
        CaseNprime::NuBelowGamma => "fluctuation (a)",
        CaseNprime::NuEqualsGamma => "fluctuation (b)",
        CaseNprime::NuAboveGamma => "fluctuation (c)",
    };
    CovarianceSpec::new(p.nu / 2.0, sandwich(&u_minus_1(spec), &m), tag.to_string())
}

/// Closed-form scalars for the mean-field network `W = (α/N)11ᵀ + (1 − α)I`.
pub mod mean_field {
    use super::*;

    pub fn s_q(q: f64) -> f64 {
        q / 2.0
    }

    /// `s²²_γ`.
    pub fn s22_gamma(alpha: f64, c: f64, q: f64, gamma_is_1: bool) -> Result<f64> {
        let i = ind(gamma_is_1);
        let num = c * c * (alpha * alpha + 1.0) * (2.0 * q - i) + 2.0 * c * c * alpha * (c - i) - i * c * c
            + 2.0 * alpha * c * (q - i).powi(2)
            - i * (2.0 * c + q - 1.0) * (q - 1.0);
        let den = guard_re("2q - 1{gamma=1}", 2.0 * q - i)?
            * guard_re("2c alpha - 1{gamma=1}", 2.0 * c * alpha - i)?
            * guard_re("c alpha + q - 1{gamma=1}", c * alpha + q - i)?.powi(2);
        Ok(q * q * num / den)
    }

    /// `s` of the `ν > γ` regime.
    pub fn s_nu_gt_gamma(alpha: f64, q: f64, gamma: f64, nu_is_1: bool) -> Result<f64> {
        let i = ind(nu_is_1);
        let r = (1.0 - alpha) / alpha;
        Ok(q * q
            * (r * r / guard_re("2q - 1{nu=1}(2gamma - 1)", 2.0 * q - i * (2.0 * gamma - 1.0))?
                + 2.0 * r / guard_re("2q - 1{nu=1}gamma", 2.0 * q - i * gamma)?
                + 1.0 / guard_re("2q - 1{nu=1}", 2.0 * q - i)?))
    }

    /// The scalar `s*` for the regime of `p`.
    pub fn s_star(alpha: f64, p: &Params) -> Result<f64> {
        match p.regime()?.case_nprime {
            CaseNprime::NuBelowGamma => Ok(s_q(p.q)),
            CaseNprime::NuEqualsGamma => s22_gamma(alpha, p.c, p.q, p.gamma_is_1()),
            CaseNprime::NuAboveGamma => s_nu_gt_gamma(alpha, p.q, p.gamma, p.nu_is_1()),
        }
    }

    /// Diagonal scalars `(S11, S12, S22)` of the non-common blocks when `ν = γ = 1`,
    /// computed from the general entries.
    pub fn case_d_scalars(alpha: f64, c: f64, q: f64) -> Result<(f64, f64, f64)> {
        let den = guard_re("2c alpha - 1", 2.0 * c * alpha - 1.0)?;
        let s11 = c * c / den;
        let s12 = q * c * (c * alpha + c - 1.0) / (den * guard_re("c alpha + q - 1", c * alpha + q - 1.0)?);
        Ok((s11, s12, s22_gamma(alpha, c, q, true)?))
    }

    /// The `(2,2)` diagonal scalar for `ν = γ = 1` exactly as displayed for the
    /// mean-field example. It agrees with the general entry only when
    /// `(q − 1)²(c − 1)(2cα − 1) = 0`; see the README.
    pub fn case_d_s22_displayed(alpha: f64, c: f64, q: f64) -> f64 {
        let num = (q * c).powi(2)
            * ((alpha * alpha + 1.0) * (2.0 * q - 1.0) + 2.0 * alpha * (c - 1.0) - 1.0
                + (2.0 * alpha - 1.0 / c) * (q - 1.0).powi(2)
                - 2.0 / c * (q - 1.0));
        num / ((2.0 * q - 1.0) * (2.0 * c * alpha - 1.0) * (c * alpha + q - 1.0).powi(2))
    }
}

/// `true` when `ν` and `γ` coincide within the exponent tolerance.
pub fn exponents_equal(a: f64, b: f64) -> bool {
    (a - b).abs() < EXPONENT_TOL
}
