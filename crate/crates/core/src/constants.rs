//! Evaluation of the transportation and concentration constants.
//!
//! * `t2_constant` — `inf_{ε₁,ε₂>0, ε₁+ε₂<1} C_B/(ε₁(1−ε₁−ε₂))·exp((ε₂+C₁²)·K₂⁺·T/((1−ε₁−ε₂)ε₂))`;
//! * `t1_constant` — `exp(2λ₀∫f̃ + 1)/(cλ₀θ√π)·M_{λ₀}²`;
//! * `ccr_constant` — `b²e/(2a√π)` for a Gaussian moment pair `(a, b)`;
//! * `admissible_ranges` — the intervals for `c` and `λ₀`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs of the T₂ constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T2ConstantQuery {
    #[serde(rename = "T")]
    pub horizon_t: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    #[serde(rename = "C_B")]
    pub c_b: f64,
    #[serde(rename = "C1", default = "default_c1")]
    pub c1: f64,
}

pub fn default_c1() -> f64 {
    2.0
}

impl T2ConstantQuery {
    pub fn new(horizon_t: f64, k2: f64, c_b: f64, c1: f64) -> Self {
        Self {
            horizon_t,
            k2,
            c_b,
            c1,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon_t > 0.0 && self.horizon_t.is_finite()) {
            return Err(Error::Parameter("T must be positive".into()));
        }
        if !(self.c_b > 0.0 && self.c_b.is_finite()) {
            return Err(Error::Parameter("C_B must be positive".into()));
        }
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return Err(Error::Parameter("C1 must be positive".into()));
        }
        if !self.k2.is_finite() {
            return Err(Error::Parameter("K2 must be finite".into()));
        }
        Ok(())
    }

    /// `K₂⁺·T`, the coefficient of the exponential factor.
    fn kappa(&self) -> f64 {
        self.k2.max(0.0) * self.horizon_t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T2Constant {
    pub value: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub warnings: Vec<String>,
}

/// The T₂ objective at `(ε₁, ε₂)`; `+∞` outside the open simplex.
pub fn t2_objective(q: &T2ConstantQuery, eps1: f64, eps2: f64) -> f64 {
    q.c_b * unit_objective(q.kappa(), q.c1, eps1, eps2)
}

fn unit_objective(kappa: f64, c1: f64, eps1: f64, eps2: f64) -> f64 {
    let rest = 1.0 - eps1 - eps2;
    if !(eps1 > 0.0 && eps2 > 0.0 && rest > 0.0) {
        return f64::INFINITY;
    }
    let expo = if kappa == 0.0 {
        0.0
    } else {
        (eps2 + c1 * c1) * kappa / (rest * eps2)
    };
    expo.exp() / (eps1 * rest)
}

/// Coordinates used by the optimiser: `ε₂ = e^u`, `ε₁ = σ(s)(1 − ε₂)`.
fn to_eps(s: f64, u: f64) -> (f64, f64) {
    let eps2 = u.exp();
    let phi = 1.0 / (1.0 + (-s).exp());
    (phi * (1.0 - eps2), eps2)
}

/// Logarithm of the unit objective in optimiser coordinates; convex in `s`
/// for every fixed `u`.
fn log_objective(kappa: f64, c1: f64, s: f64, u: f64) -> f64 {
    let eps2 = u.exp();
    let one_m_eps2 = 1.0 - eps2;
    if !(one_m_eps2 > 0.0) {
        return f64::INFINITY;
    }
    // −ln σ(s) − ln σ(−s) = softplus(−s) + softplus(s)
    let softplus = |x: f64| if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
    let one_m_phi = 1.0 / (1.0 + s.exp());
    let expo = if kappa == 0.0 {
        0.0
    } else {
        (eps2 + c1 * c1) * kappa / (one_m_phi * one_m_eps2 * eps2)
    };
    softplus(s) + softplus(-s) - 2.0 * one_m_eps2.ln() + expo
}

const U_MIN: f64 = -12.0 * std::f64::consts::LN_10;
const U_MAX: f64 = -1e-9;
const S_RANGE: f64 = 40.0;

fn golden_min(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Minimises the T₂ objective: a 200×200 grid in `(logit φ, ln ε₂)`
/// followed by nested golden-section refinement.
pub fn t2_constant(q: &T2ConstantQuery) -> Result<T2Constant> {
    q.validate()?;
    let mut warnings = Vec::new();
    if q.k2 < 0.0 {
        let msg = format!(
            "K2 = {} is negative; the exponent is evaluated with max(K2, 0) = 0",
            q.k2
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let kappa = q.kappa();
    let c1 = q.c1;
    let n = 200;
    let s_at = |i: usize| -S_RANGE + 2.0 * S_RANGE * i as f64 / (n - 1) as f64;
    let u_at = |j: usize| U_MIN + (U_MAX - U_MIN) * j as f64 / (n - 1) as f64;
    let mut best = (f64::INFINITY, 0, 0);
    for j in 0..n {
        for i in 0..n {
            let val = log_objective(kappa, c1, s_at(i), u_at(j));
            if val < best.0 {
                best = (val, i, j);
            }
        }
    }
    let (_, _, bj) = best;
    let u_lo = u_at(bj.saturating_sub(1));
    let u_hi = u_at((bj + 1).min(n - 1));
    let inner = |u: f64| golden_min(-S_RANGE, S_RANGE, 1e-11, |s| log_objective(kappa, c1, s, u));
    let (u_star, _) = golden_min(u_lo, u_hi, 1e-11, |u| inner(u).1);
    let (s_star, _) = inner(u_star);
    let (eps1, eps2) = to_eps(s_star, u_star);
    let value = q.c_b * unit_objective(kappa, c1, eps1, eps2);
    Ok(T2Constant {
        value,
        eps1,
        eps2,
        warnings,
    })
}

/// Inputs of the T₁ constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T1ConstantQuery {
    pub lambda0: f64,
    pub c: f64,
    pub theta: f64,
    /// `∫₀^T f̃(s) ds`.
    pub f_tilde_integral: f64,
    /// `∫_H e^{λ₀‖x‖²} μ(dx)`, equal to `e^{λ₀‖x₀‖²}` for `μ = δ_{x₀}`.
    pub mu_moment: f64,
}

impl T1ConstantQuery {
    fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            bad.push(format!("lambda0 = {} must be positive", self.lambda0));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            bad.push(format!("c = {} must lie in (0, 1)", self.c));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            bad.push(format!("theta = {} must be positive", self.theta));
        }
        if !(self.f_tilde_integral >= 0.0 && self.f_tilde_integral.is_finite()) {
            bad.push(format!(
                "f_tilde_integral = {} must be finite and nonnegative",
                self.f_tilde_integral
            ));
        }
        if !(self.mu_moment >= 1.0 && self.mu_moment.is_finite()) {
            bad.push(format!("mu_moment = {} must be finite and at least 1", self.mu_moment));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Parameter(bad.join("; ")))
        }
    }
}

/// `exp(2λ₀∫f̃ + 1)/(cλ₀θ√π)·M_{λ₀}²`.
pub fn t1_constant(q: &T1ConstantQuery) -> Result<f64> {
    q.validate()?;
    Ok((2.0 * q.lambda0 * q.f_tilde_integral + 1.0).exp() / (q.c * q.lambda0 * q.theta * PI.sqrt())
        * q.mu_moment
        * q.mu_moment)
}

/// As [`t1_constant`], additionally requiring `c < c_max` and `λ₀` below the
/// bound of the T₁ statement.
pub fn t1_constant_checked(q: &T1ConstantQuery, ranges: &AdmissibleRanges) -> Result<f64> {
    if q.c >= ranges.c_max {
        return Err(Error::Parameter(format!(
            "c = {} must be below c_max = {}",
            q.c, ranges.c_max
        )));
    }
    if q.lambda0 >= ranges.lambda0_max_theorem {
        return Err(Error::Parameter(format!(
            "lambda0 = {} must be below {}",
            q.lambda0, ranges.lambda0_max_theorem
        )));
    }
    t1_constant(q)
}

/// Gaussian-concentration constant `D = b²e/(2a√π)`.
pub fn ccr_constant(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Parameter(format!("a = {a} must be positive")));
    }
    if !(b >= 1.0 && b.is_finite()) {
        return Err(Error::Parameter(format!("b = {b} must be at least 1")));
    }
    Ok(b * b * std::f64::consts::E / (2.0 * a * PI.sqrt()))
}

/// `(a, b) = (cλ₀θ, exp(λ₀(∫f̃ + ‖x₀‖²_H)))`.
pub fn gaussian_moment_pair(
    c: f64,
    lambda0: f64,
    theta: f64,
    f_tilde_integral: f64,
    x0_h_norm_sq: f64,
) -> Result<(f64, f64)> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::Parameter(format!("c = {c} must lie in (0, 1)")));
    }
    if !(lambda0 >= 0.0 && lambda0.is_finite()) {
        return Err(Error::Parameter(format!("lambda0 = {lambda0} must be nonnegative")));
    }
    if !(theta > 0.0) {
        return Err(Error::Parameter(format!("theta = {theta} must be positive")));
    }
    if !(f_tilde_integral >= 0.0 && x0_h_norm_sq >= 0.0) {
        return Err(Error::Parameter("integrals and norms must be nonnegative".into()));
    }
    Ok((
        c * lambda0 * theta,
        (lambda0 * (f_tilde_integral + x0_h_norm_sq)).exp(),
    ))
}

/// Admissible parameter intervals: `c ∈ (0, c_max)` and `λ₀ ∈ (0, bound)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleRanges {
    pub c: f64,
    pub c_max: f64,
    /// `((1−c)θη − K₃)/(2C_B + θη)` (exponential-estimate form).
    pub lambda0_max_lemma: f64,
    /// `((1−c)θη − K₃)/(2C_B)` (T₁ statement form).
    pub lambda0_max_theorem: f64,
}

impl AdmissibleRanges {
    /// The default `λ₀` ceiling: the smaller of the two bounds.
    pub fn lambda0_max(&self) -> f64 {
        self.lambda0_max_lemma.min(self.lambda0_max_theorem)
    }
}

pub fn admissible_ranges(theta: f64, eta: f64, k3: f64, c_b: f64, c: f64) -> Result<AdmissibleRanges> {
    let te = theta * eta;
    if !(te - k3 > 0.0) {
        return Err(Error::Infeasible(format!(
            "theta·eta − K3 = {} must be positive",
            te - k3
        )));
    }
    if !(c_b > 0.0) {
        return Err(Error::Parameter("C_B must be positive".into()));
    }
    let c_max = 1.0 - k3 / te;
    if !(c > 0.0 && c < c_max) {
        return Err(Error::Parameter(format!("c = {c} must lie in (0, {c_max})")));
    }
    let num = (1.0 - c) * te - k3;
    Ok(AdmissibleRanges {
        c,
        c_max,
        lambda0_max_lemma: num / (2.0 * c_b + te),
        lambda0_max_theorem: num / (2.0 * c_b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn t2_at_zero_k2_is_four_c_b() {
        for (t, c1) in [(1.0, 2.0), (5.0, 1.0), (0.1, 3.0)] {
            let r = t2_constant(&T2ConstantQuery::new(t, 0.0, 1.0, c1)).unwrap();
            assert_relative_eq!(r.value, 4.0, max_relative = 1e-4);
            assert!(r.warnings.is_empty());
        }
    }

    #[test]
    fn negative_k2_is_clamped_with_warning() {
        let r = t2_constant(&T2ConstantQuery::new(1.0, -1.0, 1.0, 2.0)).unwrap();
        assert_relative_eq!(r.value, 4.0, max_relative = 1e-4);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn t2_homogeneous_in_c_b() {
        let a = t2_constant(&T2ConstantQuery::new(1.0, 1.0, 1.0, 2.0)).unwrap();
        let b = t2_constant(&T2ConstantQuery::new(1.0, 1.0, 2.0, 2.0)).unwrap();
        assert_eq!(b.value, 2.0 * a.value);
    }

    #[test]
    fn t2_rejects_bad_queries() {
        assert!(t2_constant(&T2ConstantQuery::new(0.0, 1.0, 1.0, 2.0)).is_err());
        assert!(t2_constant(&T2ConstantQuery::new(1.0, 1.0, 0.0, 2.0)).is_err());
        assert!(t2_constant(&T2ConstantQuery::new(1.0, 1.0, 1.0, -1.0)).is_err());
    }

    #[test]
    fn t1_examples() {
        let q = T1ConstantQuery {
            lambda0: 1.0,
            c: 0.5,
            theta: 1.5,
            f_tilde_integral: 0.0,
            mu_moment: 1.0,
        };
        let c = t1_constant(&q).unwrap();
        assert_relative_eq!(c, std::f64::consts::E / (0.75 * PI.sqrt()), max_relative = 1e-14);
        assert!((c - 2.0449).abs() < 1e-4);
        let doubled = t1_constant(&T1ConstantQuery { mu_moment: 2.0, ..q }).unwrap();
        assert_relative_eq!(doubled, 4.0 * c, max_relative = 1e-15);
        let q2 = T1ConstantQuery {
            lambda0: 0.3,
            f_tilde_integral: 1.0,
            ..q
        };
        let c2 = t1_constant(&q2).unwrap();
        assert_relative_eq!(c2, 1.6f64.exp() / (0.225 * PI.sqrt()), max_relative = 1e-14);
        assert_relative_eq!(c2, 12.414, max_relative = 1e-3);
        assert!(t1_constant(&T1ConstantQuery { mu_moment: 0.5, ..q }).is_err());
        assert!(t1_constant(&T1ConstantQuery { c: 1.0, ..q }).is_err());
    }

    #[test]
    fn t1_checked_enforces_ranges() {
        let r = admissible_ranges(1.5, crate::problem::eta_interval(), 0.0, 1.0, 0.5).unwrap();
        let q = T1ConstantQuery {
            lambda0: 1.2,
            c: 0.5,
            theta: 1.5,
            f_tilde_integral: 0.0,
            mu_moment: 1.0,
        };
        assert!(t1_constant_checked(&q, &r).is_err());
        assert!(t1_constant_checked(&T1ConstantQuery { lambda0: 1.0, ..q }, &r).is_ok());
    }

    #[test]
    fn t1_has_interior_minimum_in_lambda0() {
        let f = 2.0;
        let bound = 1.0;
        let vals: Vec<f64> = (1..1000)
            .map(|i| {
                t1_constant(&T1ConstantQuery {
                    lambda0: bound * i as f64 / 1000.0,
                    c: 0.5,
                    theta: 1.5,
                    f_tilde_integral: f,
                    mu_moment: 1.0,
                })
                .unwrap()
            })
            .collect();
        let argmin = vals
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!(argmin > 0 && argmin < vals.len() - 1);
        let sign_changes = vals
            .windows(3)
            .filter(|w| (w[1] - w[0]).signum() != (w[2] - w[1]).signum())
            .count();
        assert_eq!(sign_changes, 1);
        assert_relative_eq!((argmin + 1) as f64 / 1000.0, 1.0 / (2.0 * f), epsilon = 1e-3);
    }

    #[test]
    fn ccr_examples() {
        let base = std::f64::consts::E / (2.0 * PI.sqrt());
        for (a, b, quoted) in [(1.0, 1.0, 0.76684), (0.5, 1.0, 1.53368), (1.0, 2.0, 3.06737)] {
            let d = ccr_constant(a, b).unwrap();
            assert_relative_eq!(d, base * b * b / a, max_relative = 1e-14);
            assert_relative_eq!(d, quoted, max_relative = 1e-4);
        }
        assert!(ccr_constant(1.0, 0.9).is_err());
        assert!(ccr_constant(0.0, 1.0).is_err());
    }

    #[test]
    fn moment_pair_examples() {
        let (a, b) = gaussian_moment_pair(0.5, 0.3, 1.5, 1.0, 0.0).unwrap();
        assert_relative_eq!(a, 0.225, max_relative = 1e-15);
        assert!((b - 1.34986).abs() < 1e-5);
        let (a, b) = gaussian_moment_pair(0.5, 0.0, 1.5, 1.0, 2.0).unwrap();
        assert_eq!((a, b), (0.0, 1.0));
    }

    #[test]
    fn admissible_range_examples() {
        let eta = crate::problem::eta_interval();
        let r = admissible_ranges(1.5, eta, 0.0, 1.0, 0.5).unwrap();
        assert!((r.lambda0_max_lemma - 0.34538).abs() < 1e-5);
        assert!((r.lambda0_max_theorem - 1.11680).abs() < 1e-4);
        assert_relative_eq!(r.lambda0_max_theorem, 0.75 * eta / 2.0, max_relative = 1e-15);
        assert_eq!(r.c_max, 1.0);
        assert_eq!(r.lambda0_max(), r.lambda0_max_lemma);
        let ns = admissible_ranges(0.1, crate::problem::eta_square(), 0.0, 0.01, 0.5).unwrap();
        // 0.5·0.1·√(2π² − 1)/0.02
        assert_relative_eq!(ns.lambda0_max_theorem, 10.822201948476, max_relative = 1e-12);
        assert_relative_eq!(ns.lambda0_max_theorem, 10.827, max_relative = 1e-3);
        assert!(matches!(
            admissible_ranges(1.0, 1.0, 2.0, 1.0, 0.5),
            Err(Error::Infeasible(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn t2_monotone(t in 0.1f64..3.0, k2 in 0.0f64..3.0, cb in 0.1f64..3.0, bump in 0.05f64..1.0) {
            let base = t2_constant(&T2ConstantQuery::new(t, k2, cb, 2.0)).unwrap().value;
            let tol = 1e-12 * base;
            for q in [
                T2ConstantQuery::new(t + bump, k2, cb, 2.0),
                T2ConstantQuery::new(t, k2 + bump, cb, 2.0),
                T2ConstantQuery::new(t, k2, cb + bump, 2.0),
            ] {
                prop_assert!(t2_constant(&q).unwrap().value >= base - tol);
            }
        }

        #[test]
        fn t2_argmin_is_admissible(t in 0.1f64..3.0, k2 in -1.0f64..3.0, cb in 0.1f64..3.0, c1 in 0.5f64..3.0) {
            let q = T2ConstantQuery::new(t, k2, cb, c1);
            let r = t2_constant(&q).unwrap();
            prop_assert!(r.eps1 > 0.0 && r.eps2 > 0.0 && r.eps1 + r.eps2 < 1.0);
            let again = t2_objective(&q, r.eps1, r.eps2);
            prop_assert!((again - r.value).abs() <= 1e-12 * r.value);
        }

        #[test]
        fn t1_decreasing_in_c(c in 0.05f64..0.9, dc in 0.01f64..0.09, lam in 0.01f64..1.0) {
            let q = T1ConstantQuery { lambda0: lam, c, theta: 1.5, f_tilde_integral: 1.0, mu_moment: 1.2 };
            let a = t1_constant(&q).unwrap();
            let b = t1_constant(&T1ConstantQuery { c: c + dc, ..q }).unwrap();
            prop_assert!(b < a);
        }

        #[test]
        fn ccr_times_a_is_constant(a in 0.01f64..10.0, b in 1.0f64..5.0) {
            let d = ccr_constant(a, b).unwrap() * a;
            let d1 = ccr_constant(1.0, b).unwrap();
            prop_assert!((d - d1).abs() <= 1e-14 * d1);
        }
    }
}
