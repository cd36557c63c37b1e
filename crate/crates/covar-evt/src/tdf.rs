//! Parametric upper tail dependence functions.
//!
//! The upper tail dependence function of a bivariate distribution with
//! continuous margins is the limit
//!
//! ```text
//! R(x, y) = lim_{u→0} P{ F_X(X) ≥ 1 - ux, F_Y(Y) ≥ 1 - uy } / u
//! ```
//!
//! It is continuous, non-decreasing in each argument, bounded by
//! `0 ≤ R(x,y) ≤ min(x,y)` and homogeneous of order one. `R(1,1)` is the
//! upper tail dependence coefficient; `R(1,1) = 0` means tail independence.
//!
//! Five parametric families are implemented: logistic, Hüsler-Reiss,
//! bilogistic, asymmetric logistic and the tail dependence function of the
//! bivariate Student-t distribution. All evaluations are closed-form except
//! the bilogistic, whose spectral integral is computed by adaptive
//! Gauss–Kronrod quadrature split at the crossing point of its two
//! max-branches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::dist::{norm_sf, t_cdf, t_pdf};
use crate::math::quadrature::adaptive_gk;

/// Tolerance for the bilogistic spectral integral.
const BILOG_QUAD_TOL: f64 = 1e-10;

/// The five supported tail dependence families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TdfFamily {
    /// Symmetric logistic, `θ ∈ (0, 1]`; `θ = 1` is tail independence.
    Logistic,
    /// Hüsler-Reiss, `θ > 0`; dependence increases with `θ`.
    HuslerReiss,
    /// Bilogistic, `α, β ∈ (0, 1)`; asymmetric generalization of the logistic.
    Bilogistic,
    /// Asymmetric logistic, `θ ∈ (0, 1]`, `ψ1, ψ2 ∈ [0, 1]`.
    AsymLogistic,
    /// Bivariate Student-t tail dependence, `ν > 0`, `ρ ∈ (0, 1)`.
    StudentT,
}

impl TdfFamily {
    /// Number of parameters of the family.
    pub fn arity(self) -> usize {
        match self {
            TdfFamily::Logistic | TdfFamily::HuslerReiss => 1,
            TdfFamily::Bilogistic | TdfFamily::StudentT => 2,
            TdfFamily::AsymLogistic => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TdfFamily::Logistic => "logistic",
            TdfFamily::HuslerReiss => "husler-reiss",
            TdfFamily::Bilogistic => "bilogistic",
            TdfFamily::AsymLogistic => "asym-logistic",
            TdfFamily::StudentT => "student-t",
        }
    }
}

impl std::str::FromStr for TdfFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logistic" | "log" => Ok(TdfFamily::Logistic),
            "husler-reiss" | "huslerreiss" | "hr" => Ok(TdfFamily::HuslerReiss),
            "bilogistic" | "bilog" => Ok(TdfFamily::Bilogistic),
            "asym-logistic" | "asymlogistic" | "alog" => Ok(TdfFamily::AsymLogistic),
            "student-t" | "studentt" | "t" => Ok(TdfFamily::StudentT),
            other => Err(Error::InvalidParameter(format!(
                "unknown tail dependence family '{other}'"
            ))),
        }
    }
}

/// A tail dependence family together with a validated parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdfModel {
    family: TdfFamily,
    params: Vec<f64>,
}

impl TdfModel {
    /// Build a model, rejecting parameter vectors of the wrong length or
    /// with entries outside the family's domain.
    pub fn new(family: TdfFamily, params: &[f64]) -> Result<Self> {
        if params.len() != family.arity() {
            return Err(Error::InvalidParameter(format!(
                "{} expects {} parameter(s), got {}",
                family.name(),
                family.arity(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{} parameters must be finite",
                family.name()
            )));
        }
        let ok = match family {
            TdfFamily::Logistic => params[0] > 0.0 && params[0] <= 1.0,
            TdfFamily::HuslerReiss => params[0] > 0.0,
            TdfFamily::Bilogistic => {
                params[0] > 0.0 && params[0] < 1.0 && params[1] > 0.0 && params[1] < 1.0
            }
            TdfFamily::AsymLogistic => {
                params[0] > 0.0
                    && params[0] <= 1.0
                    && (0.0..=1.0).contains(&params[1])
                    && (0.0..=1.0).contains(&params[2])
            }
            // The Student-t form used here is only valid for positive
            // correlation; ρ ≤ 0 is rejected rather than extrapolated.
            TdfFamily::StudentT => params[0] > 0.0 && params[1] > 0.0 && params[1] < 1.0,
        };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "{} parameters {params:?} outside the admissible region",
                family.name()
            )));
        }
        Ok(TdfModel {
            family,
            params: params.to_vec(),
        })
    }

    pub fn logistic(theta: f64) -> Result<Self> {
        Self::new(TdfFamily::Logistic, &[theta])
    }

    pub fn husler_reiss(theta: f64) -> Result<Self> {
        Self::new(TdfFamily::HuslerReiss, &[theta])
    }

    pub fn bilogistic(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(TdfFamily::Bilogistic, &[alpha, beta])
    }

    pub fn asym_logistic(theta: f64, psi1: f64, psi2: f64) -> Result<Self> {
        Self::new(TdfFamily::AsymLogistic, &[theta, psi1, psi2])
    }

    pub fn student_t(nu: f64, rho: f64) -> Result<Self> {
        Self::new(TdfFamily::StudentT, &[nu, rho])
    }

    pub fn family(&self) -> TdfFamily {
        self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Evaluate `R(x, y)` for `x, y ≥ 0`.
    pub fn eval_r(&self, x: f64, y: f64) -> Result<f64> {
        if !(x >= 0.0 && y >= 0.0) || !x.is_finite() || !y.is_finite() {
            return Err(Error::Domain(format!(
                "tail dependence function requires finite x, y ≥ 0, got ({x}, {y})"
            )));
        }
        if x == 0.0 || y == 0.0 {
            return Ok(0.0);
        }
        let r = match self.family {
            TdfFamily::Logistic => logistic_r(self.params[0], x, y),
            TdfFamily::HuslerReiss => husler_reiss_r(self.params[0], x, y),
            TdfFamily::Bilogistic => bilogistic_r(self.params[0], self.params[1], x, y)?,
            TdfFamily::AsymLogistic => {
                logistic_r(self.params[0], self.params[1] * x, self.params[2] * y)
            }
            TdfFamily::StudentT => student_t_r(self.params[0], self.params[1], x, y),
        };
        // The exact function satisfies 0 ≤ R ≤ x ∧ y; clamp rounding noise.
        Ok(r.clamp(0.0, x.min(y)))
    }

    /// `eval_r` for trusted in-range arguments on hot paths: skips input
    /// validation and evaluates the bilogistic by its closed-form
    /// antiderivative instead of quadrature.
    pub(crate) fn eval_r_fast(&self, x: f64, y: f64) -> f64 {
        if x == 0.0 || y == 0.0 {
            return 0.0;
        }
        let r = match self.family {
            TdfFamily::Logistic => logistic_r(self.params[0], x, y),
            TdfFamily::HuslerReiss => husler_reiss_r(self.params[0], x, y),
            TdfFamily::Bilogistic => {
                return bilogistic_r_closed(self.params[0], self.params[1], x, y)
            }
            TdfFamily::AsymLogistic => {
                logistic_r(self.params[0], self.params[1] * x, self.params[2] * y)
            }
            TdfFamily::StudentT => student_t_r(self.params[0], self.params[1], x, y),
        };
        r.clamp(0.0, x.min(y))
    }

    /// Partial derivative `R₂(x, y) = ∂R/∂y`, closed form for all families
    /// except the bilogistic, which uses a central finite difference.
    pub fn eval_r_partial2(&self, x: f64, y: f64) -> Result<f64> {
        if !(x > 0.0 && y >= 0.0) || !x.is_finite() || !y.is_finite() {
            return Err(Error::Domain(format!(
                "R₂ requires finite x > 0, y ≥ 0, got ({x}, {y})"
            )));
        }
        match self.family {
            TdfFamily::Logistic => logistic_r2(self.params[0], x, y),
            TdfFamily::HuslerReiss => {
                let theta = self.params[0];
                if y == 0.0 {
                    return Ok(1.0);
                }
                Ok(norm_sf(1.0 / theta + theta / 2.0 * (y / x).ln()))
            }
            TdfFamily::AsymLogistic => {
                let (theta, psi1, psi2) = (self.params[0], self.params[1], self.params[2]);
                if psi2 == 0.0 {
                    return Ok(0.0);
                }
                if psi1 == 0.0 {
                    // With ψ1 = 0 the joint term cancels ψ2·y exactly, so R ≡ 0.
                    return Ok(0.0);
                }
                Ok(psi2 * logistic_r2(theta, psi1 * x, psi2 * y)?)
            }
            TdfFamily::Bilogistic => {
                let h = 1e-6 * y.max(1.0);
                let hi = self.eval_r(x, y + h)?;
                if y > h {
                    let lo = self.eval_r(x, y - h)?;
                    Ok((hi - lo) / (2.0 * h))
                } else {
                    let lo = self.eval_r(x, y)?;
                    Ok((hi - lo) / h)
                }
            }
            TdfFamily::StudentT => Ok(student_t_r2(self.params[0], self.params[1], x, y)),
        }
    }

    /// `R(1, η)` over an ascending grid of `η ∈ [0, 1]`, e.g. for plotting
    /// how fast the adjusted quantile level decays with dependence strength.
    pub fn r_one_eta_curve(&self, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
        if grid.iter().any(|&e| !(0.0..=1.0).contains(&e)) {
            return Err(Error::Domain("grid values must lie in [0, 1]".into()));
        }
        if grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Domain("grid must be ascending".into()));
        }
        grid.iter().map(|&eta| Ok((eta, self.eval_r(1.0, eta)?))).collect()
    }

    /// Upper tail dependence coefficient `R(1, 1)`.
    pub fn tail_dependence_coefficient(&self) -> Result<f64> {
        self.eval_r(1.0, 1.0)
    }
}

/// Logistic family: `R = x + y - (x^{1/θ} + y^{1/θ})^θ`.
///
/// Evaluated in log space — the powers `x^{1/θ}` overflow f64 well before
/// θ gets interestingly small — and written as
/// `small - large·expm1(θ·ln1p(ratio))` so that the solve for tiny
/// adjustment factors does not lose the answer to cancellation.
fn logistic_r(theta: f64, x: f64, y: f64) -> f64 {
    if theta == 1.0 || x == 0.0 || y == 0.0 {
        return 0.0;
    }
    // log(b/a) where a = x^{1/θ}, b = y^{1/θ}
    let d = (y.ln() - x.ln()) / theta;
    if d <= 0.0 {
        // R = y - x·((1 + b/a)^θ - 1), with b/a = e^d ≤ 1
        y - x * (theta * d.exp().ln_1p()).exp_m1()
    } else {
        x - y * (theta * (-d).exp().ln_1p()).exp_m1()
    }
}

fn logistic_r2(theta: f64, x: f64, y: f64) -> Result<f64> {
    if theta == 1.0 {
        return Ok(0.0);
    }
    if y == 0.0 {
        return Ok(1.0);
    }
    // R₂ = 1 - y^{1/θ-1}·(x^{1/θ} + y^{1/θ})^{θ-1}, via log-sum-exp.
    let la = x.ln() / theta;
    let lb = y.ln() / theta;
    let lse = la.max(lb) + (-(la - lb).abs()).exp().ln_1p();
    let log_term = (1.0 / theta - 1.0) * y.ln() + (theta - 1.0) * lse;
    Ok(1.0 - log_term.exp())
}

/// Hüsler-Reiss family in survival form, exact in both tails:
/// `R = x·Φ̄(1/θ + θ/2·log(x/y)) + y·Φ̄(1/θ + θ/2·log(y/x))`.
fn husler_reiss_r(theta: f64, x: f64, y: f64) -> f64 {
    let log_ratio = (x / y).ln();
    x * norm_sf(1.0 / theta + theta / 2.0 * log_ratio)
        + y * norm_sf(1.0 / theta - theta / 2.0 * log_ratio)
}

/// Bilogistic family: `R = x + y - ∫₀¹ max{(1-α)t^{-α}x, (1-β)(1-t)^{-β}y} dt`.
///
/// The first branch dominates left of the crossing point and the second
/// right of it, so the integral is split there and each side handed to the
/// adaptive rule, which also absorbs the integrable endpoint singularities.
/// The right piece is integrated in `s = 1 - t` so its singular endpoint
/// sits at zero, where f64 has full dynamic range. Arguments are rescaled
/// to `x + y = 1` first (the crossing point is scale-invariant), which
/// makes homogeneity of the result exact.
fn bilogistic_r(alpha: f64, beta: f64, x: f64, y: f64) -> Result<f64> {
    let scale = x + y;
    let (xn, yn) = (x / scale, y / scale);
    let t_star = bilog_crossing(alpha, beta, xn, yn)?;
    let left = adaptive_gk(
        &|t: f64| (1.0 - alpha) * t.powf(-alpha) * xn,
        0.0,
        t_star,
        BILOG_QUAD_TOL / 2.0,
    )?;
    let right = adaptive_gk(
        &|s: f64| (1.0 - beta) * s.powf(-beta) * yn,
        0.0,
        1.0 - t_star,
        BILOG_QUAD_TOL / 2.0,
    )?;
    Ok(scale * (xn + yn - left - right))
}

/// Crossing point of the two bilogistic max-branches, the unique root in
/// (0,1) of `(1-α)t^{-α}x = (1-β)(1-t)^{-β}y`, as a logit `z` with
/// `t* = σ(z)`.
///
/// Solved in logit coordinates, where the log difference of the branches
/// is strictly decreasing and both endpoints of (0,1) sit at infinite
/// distance — extreme `x/y` ratios push `t*` within one ulp of 0 or 1, and
/// the logit keeps full precision there. Safeguarded Newton with a
/// bracketing fallback.
pub(crate) fn bilog_crossing_logit(alpha: f64, beta: f64, x: f64, y: f64) -> f64 {
    let c = (1.0 - alpha).ln() + x.ln() - (1.0 - beta).ln() - y.ln();
    // g(z) = c - α·log σ(z) + β·log σ(-z), with log σ(z) = -ln1p(e^{-z}).
    let g = |z: f64| c + alpha * (-z).exp().ln_1p() - beta * z.exp().ln_1p();
    let (mut lo, mut hi) = (-(c.abs() + 50.0) / alpha, (c.abs() + 50.0) / beta);
    let mut z = 0.0_f64.clamp(lo, hi);
    for _ in 0..200 {
        let gz = g(z);
        if gz == 0.0 {
            return z;
        }
        if gz > 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let sig = 1.0 / (1.0 + (-z).exp());
        let dg = -alpha * (1.0 - sig) - beta * sig;
        let mut next = z - gz / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - z).abs() <= 1e-13 * (1.0 + z.abs()) {
            return next;
        }
        z = next;
    }
    z
}

/// Crossing point in `t` coordinates for the quadrature split. May
/// saturate to 0 or 1 at extreme argument ratios; the truncated branch
/// then carries negligible mass relative to the smaller argument.
pub(crate) fn bilog_crossing(alpha: f64, beta: f64, x: f64, y: f64) -> Result<f64> {
    let z = bilog_crossing_logit(alpha, beta, x, y);
    Ok(1.0 / (1.0 + (-z).exp()))
}

/// Closed-form bilogistic evaluation for internal hot paths: each
/// max-branch integrates exactly once the crossing point is known, giving
/// `R = x + y - x·t*^{1-α} - y·(1-t*)^{1-β}`. The branch powers are taken
/// from the crossing logit, so neither loses precision when `t*`
/// approaches an endpoint. The public [`TdfModel::eval_r`] keeps the
/// quadrature route; tests pin the two against each other.
pub(crate) fn bilogistic_r_closed(alpha: f64, beta: f64, x: f64, y: f64) -> f64 {
    if x == 0.0 || y == 0.0 {
        return 0.0;
    }
    let scale = x + y;
    let (xn, yn) = (x / scale, y / scale);
    let z = bilog_crossing_logit(alpha, beta, xn, yn);
    // t*^{1-α} = exp(-(1-α)·ln1p(e^{-z})), (1-t*)^{1-β} = exp(-(1-β)·ln1p(e^{z}))
    let left = (-(1.0 - alpha) * (-z).exp().ln_1p()).exp();
    let right = (-(1.0 - beta) * z.exp().ln_1p()).exp();
    let r = xn + yn - xn * left - yn * right;
    (scale * r).clamp(0.0, x.min(y))
}

/// Student-t tail dependence function (positively correlated case):
/// `R = x·F_T(c(ρ - (x/y)^{1/ν}); ν+1) + y·F_T(c(ρ - (y/x)^{1/ν}); ν+1)`
/// with `c = sqrt((ν+1)/(1-ρ²))`.
fn student_t_r(nu: f64, rho: f64, x: f64, y: f64) -> f64 {
    let c = ((nu + 1.0) / (1.0 - rho * rho)).sqrt();
    let rxy = (x / y).powf(1.0 / nu);
    x * t_cdf(c * (rho - rxy), nu + 1.0) + y * t_cdf(c * (rho - 1.0 / rxy), nu + 1.0)
}

fn student_t_r2(nu: f64, rho: f64, x: f64, y: f64) -> f64 {
    let c = ((nu + 1.0) / (1.0 - rho * rho)).sqrt();
    if y == 0.0 {
        return t_cdf(c * rho, nu + 1.0);
    }
    let rxy = (x / y).powf(1.0 / nu); // (x/y)^{1/ν}
    let a = c * (rho - rxy);
    let b = c * (rho - 1.0 / rxy);
    (c / nu) * rxy * (x / y) * t_pdf(a, nu + 1.0) + t_cdf(b, nu + 1.0)
        - (c / nu) / rxy * t_pdf(b, nu + 1.0)
}
