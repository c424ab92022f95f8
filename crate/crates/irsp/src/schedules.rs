//! Step-size sequences `r_n`, empirical-mean weights `q_{n,k}`, and the
//! classification of the asymptotic regime of a `(γ, ν)` pair.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{is_one, EXPONENT_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("gamma = {0} outside (1/2, 1]; the regime gamma <= 1/2 is not covered")]
    ExponentOutOfRange(f64),
    #[error("step constant c = {0} must be positive and finite")]
    NonPositiveConstant(f64),
    #[error("delta = {delta} outside the admissible range for the {family} family")]
    DeltaOutOfRange { family: &'static str, delta: f64 },
    #[error("exp_sum needs b > 0, got {0}")]
    NonPositiveRate(f64),
    #[error("weight family gives nu = {0}, outside (1/2, 1]")]
    NuOutOfRange(f64),
}

/// `r_{n−1} = c·n^{−γ}`, used from the first `n` at which it drops below one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RSchedule {
    pub c: f64,
    pub gamma: f64,
    /// First index `n` with `c·n^{−γ} < 1`.
    pub start: u64,
}

impl RSchedule {
    /// Value `r_{n−1} = c·n^{−γ}` of the closed-form sequence at index `n`.
    pub fn r_at(&self, n: u64) -> f64 {
        self.c * (n as f64).powf(-self.gamma)
    }

    /// Step size used by simulation step `k ≥ 1`: the `k`-th generated value.
    pub fn step_rate(&self, k: u64) -> f64 {
        self.r_at(k + self.start - 1)
    }

    /// The classical Pólya urn corresponds to `c = γ = 1`.
    pub fn is_polya_urn(&self) -> bool {
        is_one(self.c) && is_one(self.gamma)
    }
}

pub fn make_r(c: f64, gamma: f64) -> Result<RSchedule, ScheduleError> {
    if !(gamma > 0.5 && gamma <= 1.0) {
        return Err(ScheduleError::ExponentOutOfRange(gamma));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(ScheduleError::NonPositiveConstant(c));
    }
    let mut start = (c.powf(1.0 / gamma).floor() as u64).max(1);
    while c * (start as f64).powf(-gamma) >= 1.0 {
        start += 1;
    }
    while start > 1 && c * ((start - 1) as f64).powf(-gamma) < 1.0 {
        start -= 1;
    }
    Ok(RSchedule { c, gamma, start })
}

/// The three analysed weight families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WeightFamily {
    /// `a_k = 1`: the plain empirical mean.
    Constant,
    /// `∑_{l≤n} a_l = n^δ`.
    PowerSum { delta: f64 },
    /// `∑_{l≤n} a_l = exp(b·n^δ)`.
    ExpSum { b: f64, delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSchedule {
    pub family: WeightFamily,
    pub nu: f64,
    pub q: f64,
}

pub fn make_weights(family: WeightFamily) -> Result<WeightSchedule, ScheduleError> {
    let (nu, q) = match family {
        WeightFamily::Constant => (1.0, 1.0),
        WeightFamily::PowerSum { delta } => {
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(ScheduleError::DeltaOutOfRange { family: "power_sum", delta });
            }
            (1.0, delta)
        }
        WeightFamily::ExpSum { b, delta } => {
            if !(delta > 0.0 && delta < 0.5) {
                return Err(ScheduleError::DeltaOutOfRange { family: "exp_sum", delta });
            }
            if !(b > 0.0 && b.is_finite()) {
                return Err(ScheduleError::NonPositiveRate(b));
            }
            (1.0 - delta, b * delta)
        }
    };
    Ok(WeightSchedule { family, nu, q })
}

impl WeightSchedule {
    /// `ln ∑_{l≤n} a_l`, with the empty sum at `n = 0` mapped to `-∞`.
    pub fn log_partial_sum(&self, n: u64) -> f64 {
        if n == 0 {
            return f64::NEG_INFINITY;
        }
        let x = n as f64;
        match self.family {
            WeightFamily::Constant => x.ln(),
            WeightFamily::PowerSum { delta } => delta * x.ln(),
            WeightFamily::ExpSum { b, delta } => b * x.powf(delta),
        }
    }

    /// Unnormalized weight `a_k = S_k − S_{k−1}`; may overflow for `exp_sum`,
    /// where the normalized [`Self::q_nk`] should be used instead.
    pub fn a_k(&self, k: u64) -> f64 {
        self.log_partial_sum(k).exp() - self.log_partial_sum(k - 1).exp()
    }

    /// `q_{n,k} = a_k / ∑_{l≤n} a_l`, evaluated in log space.
    pub fn q_nk(&self, n: u64, k: u64) -> f64 {
        assert!(k >= 1 && k <= n, "weight index out of range");
        let ln_sn = self.log_partial_sum(n);
        let hi = (self.log_partial_sum(k) - ln_sn).exp();
        let lo = (self.log_partial_sum(k - 1) - ln_sn).exp();
        hi - lo
    }

    /// `q_{n,n} = 1 − S_{n−1}/S_n`, computed without cancellation.
    pub fn q_nn(&self, n: u64) -> f64 {
        if n <= 1 {
            return 1.0;
        }
        let x = n as f64;
        // ln(S_{n−1}/S_n) for each family.
        let log_ratio = match self.family {
            WeightFamily::Constant => (-1.0 / x).ln_1p(),
            WeightFamily::PowerSum { delta } => delta * (-1.0 / x).ln_1p(),
            WeightFamily::ExpSum { b, delta } => b * x.powf(delta) * (delta * (-1.0 / x).ln_1p()).exp_m1(),
        };
        -log_ratio.exp_m1()
    }
}

/// Case tags of the joint CLT for `(Z_n, N_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseY {
    A,
    B,
    C,
    D,
    E,
}

/// Case tags of the CLT for the common component `Ñ_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseNtilde {
    A,
    B,
    C,
}

/// Case tags of the CLT for the fluctuation part `N′_n`.
/// Serialized as `a`, `b`, `c` in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseNprime {
    #[serde(rename = "a")]
    NuBelowGamma,
    #[serde(rename = "b")]
    NuEqualsGamma,
    #[serde(rename = "c")]
    NuAboveGamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub gamma: f64,
    pub nu: f64,
    pub gamma0: f64,
    pub case_y: CaseY,
    pub case_ntilde: CaseNtilde,
    pub case_nprime: CaseNprime,
    pub rate_y: f64,
    pub rate_ntilde: f64,
    pub rate_nprime: f64,
}

/// Classify `(γ, ν)`; both must lie in `(1/2, 1]`.
pub fn classify_regime(gamma: f64, nu: f64) -> Result<Regime, ScheduleError> {
    if !(gamma > 0.5 && gamma <= 1.0) {
        return Err(ScheduleError::ExponentOutOfRange(gamma));
    }
    if !(nu > 0.5 && nu <= 1.0) {
        return Err(ScheduleError::NuOutOfRange(nu));
    }
    let gamma0 = f64::max(0.5, 2.0 * gamma - 1.0);
    let eq = |a: f64, b: f64| (a - b).abs() < EXPONENT_TOL;
    let nu_is_1 = is_one(nu);
    let case_y = if eq(nu, gamma0) {
        if nu_is_1 {
            CaseY::D
        } else {
            CaseY::C
        }
    } else if nu < gamma0 {
        CaseY::A
    } else if nu_is_1 {
        CaseY::E
    } else {
        CaseY::B
    };
    let case_ntilde = match case_y {
        CaseY::A => CaseNtilde::A,
        CaseY::B => CaseNtilde::B,
        _ => CaseNtilde::C,
    };
    let case_nprime = if eq(nu, gamma) {
        CaseNprime::NuEqualsGamma
    } else if nu < gamma {
        CaseNprime::NuBelowGamma
    } else {
        CaseNprime::NuAboveGamma
    };
    let slow = gamma - 0.5;
    let rate_y = if case_y == CaseY::A { nu / 2.0 } else { slow };
    let rate_ntilde = if case_ntilde == CaseNtilde::A { nu / 2.0 } else { slow };
    Ok(Regime {
        gamma,
        nu,
        gamma0,
        case_y,
        case_ntilde,
        case_nprime,
        rate_y,
        rate_ntilde,
        rate_nprime: nu / 2.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub nu: f64,
    pub q: f64,
    /// Open interval `(γ0, 1)` in which the common component converges fastest.
    pub optimal_nu_range: (f64, f64),
    pub note: String,
}

/// Weight exponents minimizing the asymptotic variance of `Ñ_n` for a given step sequence.
pub fn recommend_schedule(gamma: f64, c: f64) -> Result<Recommendation, ScheduleError> {
    let r = make_r(c, gamma)?;
    let gamma0 = f64::max(0.5, 2.0 * gamma - 1.0);
    let note = if is_one(gamma) && is_one(c) {
        "nu = gamma = 1 and q = c = 1: the plain empirical mean is already optimal".to_string()
    } else {
        format!(
            "choose nu = gamma = {} and q = c = {}: the weights then match the step sizes and the \
             variance term depending on q vanishes",
            r.gamma, r.c
        )
    };
    Ok(Recommendation { nu: gamma, q: c, optimal_nu_range: (gamma0, 1.0), note })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_schedule_values() {
        let r = make_r(1.0, 1.0).unwrap();
        assert!((r.r_at(10) - 0.1).abs() < 1e-15);
        assert!(r.is_polya_urn());
        assert_eq!(r.start, 2);
        let r = make_r(2.0, 0.6).unwrap();
        assert_eq!(r.start, 4);
        assert!(r.step_rate(1) < 1.0);
        assert!(matches!(make_r(1.0, 0.5), Err(ScheduleError::ExponentOutOfRange(_))));
    }

    #[test]
    fn weight_values() {
        let w = make_weights(WeightFamily::Constant).unwrap();
        for k in 1..=5 {
            assert!((w.q_nk(5, k) - 0.2).abs() < 1e-15);
        }
        let w = make_weights(WeightFamily::PowerSum { delta: 2.0 }).unwrap();
        assert!((w.q_nn(10) - 0.19).abs() < 1e-15);
        let w = make_weights(WeightFamily::ExpSum { b: 1.0, delta: 0.3 }).unwrap();
        assert!((w.nu - 0.7).abs() < 1e-15 && (w.q - 0.3).abs() < 1e-15);
        assert!(make_weights(WeightFamily::ExpSum { b: 1.0, delta: 0.5 }).is_err());
        assert_eq!(w.q_nn(1), 1.0);
    }

    #[test]
    fn regime_examples() {
        let r = classify_regime(0.9, 0.6).unwrap();
        assert!((r.gamma0 - 0.8).abs() < 1e-15);
        assert_eq!(r.case_y, CaseY::A);
        assert!((r.rate_y - 0.3).abs() < 1e-15);
        assert_eq!(classify_regime(1.0, 1.0).unwrap().case_y, CaseY::D);
        let r = classify_regime(0.75, 1.0).unwrap();
        assert_eq!((r.gamma0, r.case_y), (0.5, CaseY::E));
    }

    #[test]
    fn scaled_last_weight_converges() {
        let n = 1_000_000u64;
        for fam in [
            WeightFamily::Constant,
            WeightFamily::PowerSum { delta: 0.7 },
            WeightFamily::PowerSum { delta: 3.0 },
            WeightFamily::ExpSum { b: 1.0, delta: 0.3 },
            WeightFamily::ExpSum { b: 5.0, delta: 0.4 },
        ] {
            let w = make_weights(fam).unwrap();
            let scaled = (n as f64).powf(w.nu) * w.q_nn(n);
            assert!((scaled / w.q - 1.0).abs() < 0.01, "{fam:?}: {scaled}");
        }
    }

    #[test]
    fn last_weight_matches_partial_sums() {
        for fam in [WeightFamily::PowerSum { delta: 2.0 }, WeightFamily::ExpSum { b: 2.0, delta: 0.25 }] {
            let w = make_weights(fam).unwrap();
            for n in 2..200 {
                assert!((w.q_nn(n) - w.q_nk(n, n)).abs() < 1e-13);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn weights_partition_unity(delta in 0.01f64..0.49, b in 0.1f64..20.0, n in 1u64..400, pick in 0usize..3) {
            let fam = match pick {
                0 => WeightFamily::Constant,
                1 => WeightFamily::PowerSum { delta: delta * 6.0 },
                _ => WeightFamily::ExpSum { b, delta },
            };
            let w = make_weights(fam).unwrap();
            let total: f64 = (1..=n).map(|k| w.q_nk(n, k)).sum();
            proptest::prop_assert!((total - 1.0).abs() < 1e-12);
            let qnn = w.q_nn(n);
            proptest::prop_assert!(qnn > 0.0 && qnn <= 1.0);
            // Weights at n are those at n−1 shrunk by 1 − q_{n,n}.
            if n >= 2 {
                for k in 1..n {
                    let lhs = w.q_nk(n, k);
                    let rhs = (1.0 - qnn) * w.q_nk(n - 1, k);
                    proptest::prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
                }
            }
        }

        #[test]
        fn regime_partition(gamma in 0.5001f64..=1.0, nu in 0.5001f64..=1.0) {
            let r = classify_regime(gamma, nu).unwrap();
            let g0 = r.gamma0;
            let expect = if (nu - g0).abs() < EXPONENT_TOL {
                if is_one(nu) { CaseY::D } else { CaseY::C }
            } else if nu < g0 { CaseY::A } else if is_one(nu) { CaseY::E } else { CaseY::B };
            proptest::prop_assert_eq!(r.case_y, expect);
            proptest::prop_assert_eq!(r.rate_nprime, nu / 2.0);
        }
    }

    #[test]
    fn recommendation() {
        let rec = recommend_schedule(0.8, 1.5).unwrap();
        assert_eq!((rec.nu, rec.q), (0.8, 1.5));
        assert_eq!(recommend_schedule(0.75, 1.0).unwrap().optimal_nu_range, (0.5, 1.0));
        assert!(recommend_schedule(1.0, 1.0).unwrap().note.contains("plain empirical mean"));
    }
}
