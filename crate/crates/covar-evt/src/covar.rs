//! The adjustment-factor solve and the composed CoVaR estimator.
//!
//! CoVaR at level `(p1, p2)` is the quantile `c` with
//! `P(Y ≥ c | X ≥ VaR_X(p1)) = p2`. Writing the unconditional exceedance
//! probability of `c` as `p2·η` defines an adjustment factor `η`; in the
//! joint tail the defining equation approaches `R(1, η·p2/p1) = p2`, whose
//! solution `η*` converts CoVaR estimation into univariate extreme
//! quantile estimation at the adjusted level `p2·η*`:
//!
//! ```text
//! CoVaR ≈ VaR_Y(p2·η*) ≈ (η*)^{-γ}·VaR_Y(p2)
//! ```
//!
//! The estimator composes a method-of-moments fit of the tail dependence
//! function (for `η̂*`), the Hill tail index and the Weissman quantile.

use serde::Serialize;

use crate::empirical::LossPairSample;
use crate::error::{Error, Result};
use crate::math::root::{bisect, bisect_expanding};
use crate::mestimator::{fit_tdf, MEstimatorFit, TestFunctionSet};
use crate::simulation::GenerativeModel;
use crate::tail::{hill, select_k_bootstrap, weissman_quantile, SelectKConfig};
use crate::tdf::{TdfFamily, TdfModel};

/// Tail probability pair: `p1` for the conditioning event, `p2` for the
/// conditional quantile level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskLevel {
    p1: f64,
    p2: f64,
}

impl RiskLevel {
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        for (name, p) in [("p1", p1), ("p2", p2)] {
            if !(0.0..1.0).contains(&p) || p == 0.0 {
                return Err(Error::Domain(format!("{name} = {p} must lie in (0, 1)")));
            }
        }
        Ok(RiskLevel { p1, p2 })
    }

    /// Equal levels `p1 = p2 = p`.
    pub fn symmetric(p: f64) -> Result<Self> {
        Self::new(p, p)
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p2(&self) -> f64 {
        self.p2
    }
}

/// A composed CoVaR estimate together with every ingredient that produced
/// it, so a stored estimate can be audited or recomposed exactly.
#[derive(Debug, Clone, Serialize)]
pub struct CovarEstimate {
    pub value: f64,
    pub eta_star_hat: f64,
    pub gamma_hat: f64,
    /// Weissman quantile of the system margin at exceedance `p2`.
    pub var_component: f64,
    pub k1: usize,
    pub k2: usize,
    pub m: usize,
    pub levels: RiskLevel,
    pub tdf_fit: MEstimatorFit,
}

/// Solve `R(1, η·p2/p1; θ) = p2` for the approximate adjustment factor.
///
/// `R(1, ·)` increases from zero to the tail dependence coefficient, so a
/// root exists iff `p2` is below the reachable range; the root is unique
/// and found by bisection to 1e-12 in `η`. Failures distinguish
/// tail-independence proximity ([`Error::NoSolution`]) from level pairs
/// that would push the scaled argument `η·p2/p1` past one
/// ([`Error::BracketExceeded`]).
pub fn solve_eta_star(model: &TdfModel, levels: RiskLevel) -> Result<f64> {
    let (p1, p2) = (levels.p1(), levels.p2());
    let ratio = p2 / p1;
    // Bracket η in (0, min(1, p1/p2)·(1+1e-9)]: both η ≤ 1 and the scaled
    // argument s = η·p2/p1 ≤ 1 must hold for the solution to be accepted.
    let s_max = ratio.min(1.0) * (1.0 + 1e-9);
    let r_at_max = model.eval_r(1.0, s_max)?;
    if r_at_max < p2 {
        // p2 is above the reachable range of R(1, ·) on the bracket.
        return Err(Error::NoSolution(format!(
            "R(1, {s_max:.6}) = {r_at_max:.6} < p2 = {p2}: dependence too close to \
             tail independence at these levels"
        )));
    }
    let f = |s: f64| match model.eval_r(1.0, s) {
        Ok(r) => r - p2,
        Err(_) => f64::NAN,
    };
    let s_tol = 1e-12 * ratio.min(1.0);
    let s = bisect(f, 1e-300, s_max, s_tol)?;
    if s > 1.0 {
        // Only reachable through the 1e-9 bracket slack: the argument of
        // R(1, ·) stays valid by homogeneity, but the estimator's
        // derivation does not cover it.
        return Err(Error::BracketExceeded { scaled_arg: s });
    }
    Ok(s / ratio)
}

/// Configuration for [`estimate_covar`].
#[derive(Debug, Clone, Serialize)]
pub struct EstimateConfig {
    /// Threshold count for the rank-based dependence fit.
    pub m: usize,
    /// Hill sample fraction; `None` selects it by subsample bootstrap.
    pub k1: Option<usize>,
    /// Quantile sample fraction; `None` copies the resolved `k1`.
    pub k2: Option<usize>,
    /// Test functions; `None` uses the family default.
    pub g: Option<TestFunctionSet>,
    /// Starting values for the dependence fit; `None` uses heuristics.
    pub init: Option<Vec<f64>>,
    pub k_bootstrap: SelectKConfig,
    /// Freeze the tail index at a known value instead of estimating it.
    pub override_gamma: Option<f64>,
    /// Freeze the adjustment factor instead of solving from the fit.
    pub override_eta_star: Option<f64>,
}

impl EstimateConfig {
    pub fn new(m: usize) -> Self {
        EstimateConfig {
            m,
            k1: None,
            k2: None,
            g: None,
            init: None,
            k_bootstrap: SelectKConfig::default(),
            override_gamma: None,
            override_eta_star: None,
        }
    }
}

/// Full estimation pipeline on a paired loss sample: dependence fit →
/// adjustment factor → Hill → Weissman at `p2` → composition
/// `VaR̂_Y(p2)·(η̂*)^{-γ̂}`. Every ingredient is recorded in the result;
/// errors propagate rather than yielding a partial estimate.
pub fn estimate_covar(
    sample: &LossPairSample,
    family: TdfFamily,
    levels: RiskLevel,
    config: &EstimateConfig,
) -> Result<CovarEstimate> {
    let n = sample.len();
    let k1 = match config.k1 {
        Some(k) => k,
        None => select_k_bootstrap(sample.ys(), &config.k_bootstrap)?.k,
    };
    let k2 = config.k2.unwrap_or(k1);
    for (name, k) in [("k1", k1), ("k2", k2)] {
        if k == 0 || k >= n {
            return Err(Error::Domain(format!(
                "{name} = {k} must satisfy 1 ≤ {name} < n = {n}"
            )));
        }
    }

    let g = config
        .g
        .clone()
        .unwrap_or_else(|| TestFunctionSet::default_for(family));
    let tdf_fit = fit_tdf(sample, config.m, family, &g, config.init.as_deref())?;

    let gamma_hat = match config.override_gamma {
        Some(gamma) => gamma,
        None => hill(sample.ys(), k1)?,
    };
    let eta_star_hat = match config.override_eta_star {
        Some(eta) => eta,
        None => solve_eta_star(&tdf_fit.model(), levels)?,
    };
    let var_component = weissman_quantile(sample.ys(), k2, gamma_hat, levels.p2())?;

    Ok(CovarEstimate {
        value: var_component * eta_star_hat.powf(-gamma_hat),
        eta_star_hat,
        gamma_hat,
        var_component,
        k1,
        k2,
        m: config.m,
        levels,
        tdf_fit,
    })
}

/// True CoVaR at equal levels `p1 = p2 = p` for a generative model with
/// known margins: the solution in `y` of `P(X > VaR_X(p), Y > y) = p²`,
/// found by bracketed bisection to 1e-10 relative accuracy.
pub fn true_covar_oracle(dist: &GenerativeModel, p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) || p == 0.0 {
        return Err(Error::Domain(format!("p = {p} must lie in (0, 1)")));
    }
    let a = dist.margin_var(p);
    let target = p * p;

    // The joint survival at (a, a) is at least p² for the positively
    // dependent models handled here, so y = a brackets from above.
    let lo = a;
    let h_lo = dist.joint_survival(a, lo)?;
    if h_lo < target {
        return Err(Error::Domain(
            "joint survival below p² at the conditioning threshold; no root above VaR".into(),
        ));
    }
    let f = |y: f64| match dist.joint_survival(a, y) {
        Ok(h) => target - h, // increasing in y
        Err(_) => f64::NAN,
    };
    let root = bisect_expanding(f, lo, 2.0 * lo.abs().max(1.0), 1e12, 1e-10 * lo.abs().max(1.0))?;
    // Polish to relative tolerance around the located root.
    bisect(f, root * (1.0 - 1e-6), root * (1.0 + 1e-6), 1e-10 * root.abs()).or(Ok(root))
}

/// Exact adjustment factor `η_p = P(Y > CoVaR)/p` at the oracle CoVaR.
pub fn exact_eta_p(dist: &GenerativeModel, p: f64) -> Result<f64> {
    let covar = true_covar_oracle(dist, p)?;
    Ok((1.0 - dist.margin_cdf(covar)) / p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close_rel(a: f64, b: f64, tol: f64) -> bool {
        (a / b - 1.0).abs() <= tol
    }

    #[test]
    fn eta_star_near_comonotone_equals_p() {
        // R(1,η) → min(1,η) as θ → 0, so the root of R(1,η) = p is p itself.
        let m = TdfModel::logistic(0.01).unwrap();
        let eta = solve_eta_star(&m, RiskLevel::symmetric(0.05).unwrap()).unwrap();
        assert!((eta - 0.05).abs() < 1e-4, "eta {eta}");
    }

    #[test]
    fn eta_star_tail_independence_has_no_solution() {
        let m = TdfModel::logistic(1.0).unwrap();
        let err = solve_eta_star(&m, RiskLevel::symmetric(0.05).unwrap()).unwrap_err();
        assert!(matches!(err, Error::NoSolution(_)), "{err}");
    }

    #[test]
    fn eta_star_logistic_grid_scan_oracle() {
        // Independent oracle: scan 10^6 grid points for the sign change of
        // 1 + η - (1 + η^{5/3})^{0.6} - 0.05 and compare with bisection.
        let theta: f64 = 0.6;
        let p = 0.05;
        let f = |eta: f64| 1.0 + eta - (1.0 + eta.powf(1.0 / theta)).powf(theta) - p;
        let n = 1_000_000;
        let mut bracket = None;
        for i in 0..n {
            let eta0 = i as f64 / n as f64;
            let eta1 = (i + 1) as f64 / n as f64;
            if f(eta0) <= 0.0 && f(eta1) > 0.0 {
                bracket = Some(0.5 * (eta0 + eta1));
                break;
            }
        }
        let scan = bracket.expect("sign change in [0,1]");
        let m = TdfModel::logistic(theta).unwrap();
        let eta = solve_eta_star(&m, RiskLevel::symmetric(p).unwrap()).unwrap();
        assert!((eta - scan).abs() < 1e-6, "bisection {eta} vs scan {scan}");
        assert!((f(eta)).abs() < 1e-9);
    }

    #[test]
    fn eta_star_two_level_scaling() {
        // At levels (p1, p2) the solve targets R(1, η·p2/p1) = p2.
        let m = TdfModel::logistic(0.6).unwrap();
        let levels = RiskLevel::new(0.02, 0.05).unwrap();
        let eta = solve_eta_star(&m, levels).unwrap();
        let s = eta * 0.05 / 0.02;
        assert!((m.eval_r(1.0, s).unwrap() - 0.05).abs() < 1e-9);
        assert!(eta <= 1.0 && s <= 1.0 + 1e-9);
    }

    #[test]
    fn eta_star_no_solution_when_p2_above_coefficient() {
        // p2 above R(1,1) cannot be reached on the bracket.
        let m = TdfModel::logistic(0.95).unwrap();
        let tdc = m.tail_dependence_coefficient().unwrap();
        let levels = RiskLevel::new(0.02, 0.10).unwrap();
        assert!(tdc < 0.10);
        let err = solve_eta_star(&m, levels).unwrap_err();
        assert!(matches!(err, Error::NoSolution(_)), "{err}");
    }

    #[test]
    fn eta_star_bracket_exceeded_on_knife_edge() {
        // A target a hair above R(1,1) resolves inside the 1e-9 slack but
        // lands the scaled argument past one, which is rejected distinctly.
        let m = TdfModel::logistic(0.6).unwrap();
        let tdc = m.tail_dependence_coefficient().unwrap();
        let r2_at_one = m.eval_r_partial2(1.0, 1.0).unwrap();
        let p2 = tdc + r2_at_one * 3e-10;
        let levels = RiskLevel::new(p2 / 2.0, p2).unwrap();
        let err = solve_eta_star(&m, levels).unwrap_err();
        assert!(matches!(err, Error::BracketExceeded { .. }), "{err}");
    }

    #[test]
    fn eta_star_decreases_with_dependence_strength() {
        let levels = RiskLevel::symmetric(0.05).unwrap();
        let mut prev = f64::INFINITY;
        for theta in [0.9, 0.7, 0.5, 0.3, 0.1] {
            let eta = solve_eta_star(&TdfModel::logistic(theta).unwrap(), levels).unwrap();
            assert!(eta < prev, "theta {theta}: eta {eta} !< {prev}");
            prev = eta;
        }
    }

    #[test]
    fn lemma_limit_p_over_eta_star() {
        // p/η*_p → R₂(1, 0) as p → 0, monotonically for the logistic.
        let m = TdfModel::logistic(0.6).unwrap();
        let r2_limit = m.eval_r_partial2(1.0, 0.0).unwrap();
        assert_eq!(r2_limit, 1.0);
        let mut prev_gap = f64::INFINITY;
        for p in [1e-2, 1e-3, 1e-4, 1e-5] {
            let eta = solve_eta_star(&m, RiskLevel::symmetric(p).unwrap()).unwrap();
            let gap = (p / eta - r2_limit).abs();
            assert!(gap < prev_gap, "p {p}: gap {gap} !< {prev_gap}");
            prev_gap = gap;
        }
        assert!(prev_gap < 0.01, "final gap {prev_gap}");
    }

    #[test]
    fn oracle_independence_reduces_to_var() {
        // Under exact independence the conditioning drops out and CoVaR is
        // the VaR of Y at the same level. The logistic with θ = 1 is the
        // independence copula.
        let gen = GenerativeModel::new(TdfModel::logistic(1.0).unwrap());
        let p = 0.05;
        let covar = true_covar_oracle(&gen, p).unwrap();
        let var_y = -1.0 / (1.0_f64 - p).ln();
        assert!(close_rel(covar, var_y, 1e-8), "covar {covar} vs VaR {var_y}");
    }

    #[test]
    fn oracle_reference_values() {
        let cases: [(TdfModel, f64); 5] = [
            (TdfModel::logistic(0.6).unwrap(), 367.31),
            (TdfModel::husler_reiss(2.5).unwrap(), 399.48),
            (TdfModel::bilogistic(0.4, 0.7).unwrap(), 341.52),
            (TdfModel::asym_logistic(0.6, 0.5, 0.8).unwrap(), 281.49),
            (TdfModel::student_t(5.0, 0.6).unwrap(), 4.42),
        ];
        for (tdf, expected) in cases {
            let gen = GenerativeModel::new(tdf);
            let covar = true_covar_oracle(&gen, 0.05).unwrap();
            assert!(
                close_rel(covar, expected, 5e-3),
                "{:?}: {covar} vs {expected}",
                gen.family()
            );
        }
    }

    #[test]
    fn oracle_decreasing_in_p() {
        let gen = GenerativeModel::new(TdfModel::logistic(0.6).unwrap());
        let c5 = true_covar_oracle(&gen, 0.05).unwrap();
        let c10 = true_covar_oracle(&gen, 0.10).unwrap();
        let c2 = true_covar_oracle(&gen, 0.02).unwrap();
        assert!(c2 > c5 && c5 > c10);
    }

    #[test]
    fn exact_eta_independence_is_one() {
        let gen = GenerativeModel::new(TdfModel::logistic(1.0).unwrap());
        let eta = exact_eta_p(&gen, 0.05).unwrap();
        assert!((eta - 1.0).abs() < 1e-6, "eta {eta}");
    }

    #[test]
    fn exact_eta_near_comonotone_approaches_p() {
        let gen = GenerativeModel::new(TdfModel::logistic(0.05).unwrap());
        let p = 0.05;
        let eta = exact_eta_p(&gen, p).unwrap();
        assert!((eta - p).abs() < 0.01, "eta {eta} vs p {p}");
    }

    #[test]
    fn exact_eta_close_to_eta_star() {
        let m = TdfModel::logistic(0.6).unwrap();
        let gen = GenerativeModel::new(m.clone());
        let p = 0.05;
        let eta = exact_eta_p(&gen, p).unwrap();
        let eta_star = solve_eta_star(&m, RiskLevel::symmetric(p).unwrap()).unwrap();
        assert!(
            (eta / eta_star - 1.0).abs() < 0.10,
            "eta {eta} vs eta* {eta_star}"
        );
    }

    #[test]
    fn estimate_is_exact_composition() {
        let gen = GenerativeModel::new(TdfModel::logistic(0.6).unwrap());
        let sample = gen.sample(2000, 99).unwrap();
        let mut config = EstimateConfig::new(180);
        config.k1 = Some(180);
        let est = estimate_covar(
            &sample,
            TdfFamily::Logistic,
            RiskLevel::symmetric(0.05).unwrap(),
            &config,
        )
        .unwrap();
        let recomposed = est.var_component * est.eta_star_hat.powf(-est.gamma_hat);
        assert!(close_rel(est.value, recomposed, 1e-12));
        assert!(est.eta_star_hat > 0.0 && est.eta_star_hat <= 1.0);
        assert_eq!(est.k2, 180);
    }

    #[test]
    fn estimate_with_frozen_ingredients_is_weissman_times_power() {
        let gen = GenerativeModel::new(TdfModel::logistic(0.6).unwrap());
        let sample = gen.sample(1000, 7).unwrap();
        let mut config = EstimateConfig::new(90);
        config.k1 = Some(90);
        config.override_gamma = Some(1.0);
        config.override_eta_star = Some(0.0545);
        let est = estimate_covar(
            &sample,
            TdfFamily::Logistic,
            RiskLevel::symmetric(0.05).unwrap(),
            &config,
        )
        .unwrap();
        let weissman = crate::tail::weissman_quantile(sample.ys(), 90, 1.0, 0.05).unwrap();
        assert!(close_rel(est.value, weissman * 0.0545_f64.powf(-1.0), 1e-12));
    }

    #[test]
    fn estimate_rejects_oversized_k() {
        let gen = GenerativeModel::new(TdfModel::logistic(0.6).unwrap());
        let sample = gen.sample(100, 1).unwrap();
        let mut config = EstimateConfig::new(20);
        config.k1 = Some(200);
        let err = estimate_covar(
            &sample,
            TdfFamily::Logistic,
            RiskLevel::symmetric(0.05).unwrap(),
            &config,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err}");
    }
}
