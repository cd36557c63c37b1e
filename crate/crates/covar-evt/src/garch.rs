//! Two-stage dynamic filtering: marginal AR(1)-GARCH(1,1) estimation with
//! standardized skew-t innovations, residual extraction and rolling
//! one-step-ahead CoVaR/VaR forecasting.
//!
//! Financial loss series are serially dependent and volatility-clustered,
//! so the static tail machinery is applied to realized innovations
//! `Ẑ_t = (X_t - μ̂_t)/σ̂_t` instead of raw losses, and dynamic forecasts
//! recompose as `μ̂_t + σ̂_t·(residual-level quantile)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::covar::{estimate_covar, EstimateConfig, RiskLevel};
use crate::empirical::LossPairSample;
use crate::error::{Error, Result};
use crate::math::optim::bfgs;
use crate::tail::{hill, weissman_quantile};
use crate::tdf::TdfFamily;

/// Fitted AR(1)-GARCH(1,1) model with skew-t innovation parameters and the
/// conditional mean/volatility paths over the estimation sample.
#[derive(Debug, Clone, Serialize)]
pub struct GarchFit {
    /// AR intercept.
    pub alpha0: f64,
    /// AR(1) coefficient.
    pub alpha1: f64,
    /// GARCH intercept, > 0.
    pub beta0: f64,
    /// ARCH loading on the squared lagged innovation, ≥ 0.
    pub beta1: f64,
    /// GARCH loading on the lagged variance, ≥ 0; `beta1 + beta2 < 1`.
    pub beta2: f64,
    /// Skew-t degrees of freedom, > 2.
    pub nu: f64,
    /// Skew-t asymmetry, > 0 (1 = symmetric).
    pub xi: f64,
    pub loglik: f64,
    /// Set when the optimum sits on the stationarity boundary
    /// (`beta1 + beta2` at its cap), e.g. on the unidentified persistence
    /// ridge that i.i.d. data produce.
    pub boundary: bool,
    pub cond_mean: Vec<f64>,
    pub cond_vol: Vec<f64>,
}

impl GarchFit {
    fn params(&self) -> GarchParams {
        GarchParams {
            alpha0: self.alpha0,
            alpha1: self.alpha1,
            beta0: self.beta0,
            beta1: self.beta1,
            beta2: self.beta2,
            nu: self.nu,
            xi: self.xi,
        }
    }
}

/// Paired realized innovations of the institution and system series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualPair {
    pub z_i: Vec<f64>,
    pub z_s: Vec<f64>,
}

// --- Standardized skew-t density ---------------------------------------------

/// Location/scale constants standardizing the two-piece skew-t to zero
/// mean and unit variance.
fn skew_t_constants(nu: f64, xi: f64) -> (f64, f64) {
    // First absolute moment of the t base and second raw moment.
    let m1 = 2.0 * nu.sqrt() * (ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0)).exp()
        / (std::f64::consts::PI.sqrt() * (nu - 1.0));
    let m2 = nu / (nu - 2.0);
    let mean = m1 * (xi - 1.0 / xi);
    let second = m2 * (xi * xi - 1.0 + 1.0 / (xi * xi));
    let var = second - mean * mean;
    (mean, var.sqrt())
}

fn t_ln_pdf(u: f64, nu: f64) -> f64 {
    ln_gamma((nu + 1.0) / 2.0)
        - ln_gamma(nu / 2.0)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - (nu + 1.0) / 2.0 * (u * u / nu).ln_1p()
}

/// Log-density of the zero-mean unit-variance two-piece skew-t: the base
/// Student-t is compressed by `ξ` on one side and stretched on the other,
/// then shifted and scaled back to standard moments. `ξ = 1` recovers the
/// standardized symmetric t.
pub fn skew_t_logpdf(z: f64, nu: f64, xi: f64) -> Result<f64> {
    if !(nu > 2.0) {
        return Err(Error::InvalidParameter(format!(
            "skew-t needs nu > 2 for unit-variance standardization, got {nu}"
        )));
    }
    if !(xi > 0.0) || !xi.is_finite() {
        return Err(Error::InvalidParameter(format!("skew-t asymmetry must be > 0, got {xi}")));
    }
    let (mean, sd) = skew_t_constants(nu, xi);
    let w = mean + sd * z;
    let u = if w >= 0.0 { w / xi } else { w * xi };
    Ok(sd.ln() + (2.0 / (xi + 1.0 / xi)).ln() + t_ln_pdf(u, nu))
}

/// Draw from the standardized skew-t: `|T|` is flipped to the heavy side
/// with probability `ξ²/(1+ξ²)`, then standardized.
pub fn sample_skew_t(nu: f64, xi: f64, rng: &mut ChaCha8Rng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    // t draw via normal / sqrt(chi2/nu)
    let z: f64 = StandardNormal.sample(rng);
    let chi = rand_distr::ChiSquared::new(nu).expect("valid df").sample(rng);
    let t = z / (chi / nu).sqrt();
    let flip: f64 = rng.random();
    let w = if flip < xi * xi / (1.0 + xi * xi) {
        t.abs() * xi
    } else {
        -t.abs() / xi
    };
    let (mean, sd) = skew_t_constants(nu, xi);
    (w - mean) / sd
}

// --- Maximum likelihood fitting ----------------------------------------------

#[derive(Debug, Clone, Copy)]
struct GarchParams {
    alpha0: f64,
    alpha1: f64,
    beta0: f64,
    beta1: f64,
    beta2: f64,
    nu: f64,
    xi: f64,
}

impl GarchParams {
    fn to_unbounded(self) -> [f64; 7] {
        let persistence = (self.beta1 + self.beta2).clamp(1e-9, 1.0 - 1e-9);
        let share = (self.beta1 / persistence).clamp(1e-9, 1.0 - 1e-9);
        [
            self.alpha0,
            (self.alpha1.clamp(-1.0 + 1e-9, 1.0 - 1e-9)).atanh(),
            self.beta0.max(1e-300).ln(),
            (persistence / (1.0 - persistence)).ln(),
            (share / (1.0 - share)).ln(),
            (self.nu - 2.0).max(1e-12).ln(),
            self.xi.max(1e-12).ln(),
        ]
    }

    fn from_unbounded(u: &[f64]) -> GarchParams {
        let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
        let persistence = sigmoid(u[3]) * (1.0 - 1e-9);
        let share = sigmoid(u[4]);
        GarchParams {
            alpha0: u[0],
            alpha1: u[1].tanh(),
            beta0: u[2].exp(),
            beta1: persistence * share,
            beta2: persistence * (1.0 - share),
            nu: 2.0 + u[5].exp(),
            xi: u[6].exp(),
        }
    }
}

/// Conditional mean/variance recursion. The first conditional mean uses
/// the first observation as its own lag and the variance recursion starts
/// at the sample variance.
fn garch_paths(p: &GarchParams, series: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = series.len();
    let sample_mean = series.iter().sum::<f64>() / n as f64;
    let sample_var =
        series.iter().map(|x| (x - sample_mean) * (x - sample_mean)).sum::<f64>() / n as f64;
    let mut mean = Vec::with_capacity(n);
    let mut var = Vec::with_capacity(n);
    let mut prev_var = sample_var.max(1e-12);
    let mut prev_eps = 0.0;
    for (t, &x) in series.iter().enumerate() {
        let mu = p.alpha0 + p.alpha1 * if t == 0 { x } else { series[t - 1] };
        let v = if t == 0 {
            prev_var
        } else {
            p.beta0 + p.beta1 * prev_eps * prev_eps + p.beta2 * prev_var
        };
        mean.push(mu);
        var.push(v);
        prev_eps = x - mu;
        prev_var = v;
    }
    (mean, var)
}

fn negative_loglik(p: &GarchParams, series: &[f64]) -> f64 {
    if p.nu <= 2.0 || p.nu > 500.0 || p.xi <= 0.0 || p.beta0 <= 0.0 {
        return f64::INFINITY;
    }
    // Innovation-density constants depend only on (ν, ξ); hoist them out
    // of the observation loop.
    let (st_mean, st_sd) = skew_t_constants(p.nu, p.xi);
    let ln_norm = st_sd.ln() + (2.0 / (p.xi + 1.0 / p.xi)).ln() + ln_gamma((p.nu + 1.0) / 2.0)
        - ln_gamma(p.nu / 2.0)
        - 0.5 * (p.nu * std::f64::consts::PI).ln();
    let half = (p.nu + 1.0) / 2.0;

    let (mean, var) = garch_paths(p, series);
    let mut nll = 0.0;
    for ((&x, &mu), &v) in series.iter().zip(&mean).zip(&var) {
        if v <= 0.0 || !v.is_finite() {
            return f64::INFINITY;
        }
        let sd = v.sqrt();
        let z = (x - mu) / sd;
        let w = st_mean + st_sd * z;
        let u = if w >= 0.0 { w / p.xi } else { w * p.xi };
        let lp = ln_norm - half * (u * u / p.nu).ln_1p();
        nll -= lp - sd.ln();
    }
    if nll.is_finite() {
        nll
    } else {
        f64::INFINITY
    }
}

/// Fit the AR(1)-GARCH(1,1) with standardized skew-t innovations by
/// maximum likelihood: quasi-Newton descent on a constraint-transformed
/// parameter space with finite-difference gradients and five deterministic
/// random restarts around a moment-based start.
pub fn fit_ar_garch(series: &[f64]) -> Result<GarchFit> {
    if series.len() < 250 {
        return Err(Error::Domain(format!(
            "GARCH fit needs at least 250 observations, got {}",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("series contains non-finite values".into()));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var < 1e-12 {
        return Err(Error::Degenerate("series variance is zero".into()));
    }
    // Lag-1 autocorrelation for the AR start.
    let mut acf1 = 0.0;
    for t in 1..series.len() {
        acf1 += (series[t] - mean) * (series[t - 1] - mean);
    }
    acf1 /= var * n;
    let acf1 = acf1.clamp(-0.5, 0.5);

    let start = GarchParams {
        alpha0: mean * (1.0 - acf1),
        alpha1: acf1,
        beta0: var * 0.10,
        beta1: 0.05,
        beta2: 0.85,
        nu: 8.0,
        xi: 1.0,
    };
    fit_ar_garch_from(series, start)
}

fn fit_ar_garch_from(series: &[f64], start: GarchParams) -> Result<GarchFit> {
    let objective = |u: &[f64]| negative_loglik(&GarchParams::from_unbounded(u), series);

    let u_start = start.to_unbounded();
    let mut candidates = vec![u_start.to_vec()];
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a4c);
    for _ in 0..5 {
        candidates.push(
            u_start
                .iter()
                .map(|&v| v + (rng.random::<f64>() - 0.5) * 1.0)
                .collect(),
        );
    }

    let mut best: Option<crate::math::optim::OptimResult> = None;
    for c in &candidates {
        if !objective(c).is_finite() {
            continue;
        }
        let run = bfgs(&objective, c, 400, 1e-3);
        if run.f.is_finite() && best.as_ref().is_none_or(|b| run.f < b.f) {
            best = Some(run);
        }
    }
    let best = best.ok_or_else(|| Error::NonConvergence {
        message: "GARCH likelihood diverged from every start".into(),
        best_point: vec![],
        best_objective: f64::INFINITY,
    })?;

    let p = GarchParams::from_unbounded(&best.x);
    let (cond_mean, cond_var) = garch_paths(&p, series);
    let boundary = p.beta1 + p.beta2 > 1.0 - 1e-6;
    Ok(GarchFit {
        alpha0: p.alpha0,
        alpha1: p.alpha1,
        beta0: p.beta0,
        beta1: p.beta1,
        beta2: p.beta2,
        nu: p.nu,
        xi: p.xi,
        loglik: -best.f,
        boundary,
        cond_mean,
        cond_vol: cond_var.iter().map(|v| v.sqrt()).collect(),
    })
}

/// Realized innovations `(x_t - μ̂_t)/σ̂_t` from a fit's stored paths.
pub fn realized_residuals(series: &[f64], fit: &GarchFit) -> Result<Vec<f64>> {
    if series.len() != fit.cond_mean.len() {
        return Err(Error::Domain(
            "series length does not match the fitted paths".into(),
        ));
    }
    Ok(series
        .iter()
        .zip(&fit.cond_mean)
        .zip(&fit.cond_vol)
        .map(|((x, mu), sd)| (x - mu) / sd)
        .collect())
}

/// One-step-ahead conditional mean and volatility for day `t` (index into
/// `series`), filtering `series[start..t]` with fixed parameters.
fn one_step_ahead(p: &GarchParams, series: &[f64], start: usize, t: usize) -> (f64, f64) {
    let window = &series[start..t];
    let (_, var) = garch_paths(p, window);
    let last_mu = p.alpha0 + p.alpha1 * window[window.len() - 1];
    // Extend the recursion one step past the window end.
    let last_eps = window[window.len() - 1]
        - (p.alpha0 + p.alpha1 * if window.len() >= 2 { window[window.len() - 2] } else { window[0] });
    let next_var = p.beta0 + p.beta1 * last_eps * last_eps + p.beta2 * var[var.len() - 1];
    (last_mu, next_var.sqrt())
}

// --- Rolling forecasts ---------------------------------------------------------

/// Marginal filter applied before the static tail estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FilterMode {
    /// AR(1)-GARCH(1,1) with skew-t innovations, refit on each window.
    ArGarchSkewT,
    /// No filtering: μ ≡ 0, σ ≡ 1, residuals are the raw observations.
    Identity,
}

/// Configuration of the rolling two-stage forecaster.
#[derive(Debug, Clone, Serialize)]
pub struct RollingConfig {
    pub window: usize,
    /// Residual-level risk estimates are refreshed every this many days.
    pub refit_stride: usize,
    pub levels: RiskLevel,
    pub family: TdfFamily,
    /// Static estimation settings applied to each window's residual pair.
    pub covar: EstimateConfig,
    pub filter: FilterMode,
}

/// One day of out-of-sample forecasts; `None` values mark days whose
/// refit failed (they are reported, never interpolated).
#[derive(Debug, Clone, Serialize)]
pub struct ForecastRow {
    pub t: usize,
    pub var_i: Option<f64>,
    pub covar_s_given_i: Option<f64>,
    pub realized_x_i: f64,
    pub realized_x_s: f64,
    pub refit_id: usize,
}

/// Static residual-level estimates shared by a refit block.
#[derive(Debug, Clone)]
struct RefitBlock {
    var_z_i: f64,
    covar_z: f64,
    garch_i: Option<GarchParams>,
    garch_s: Option<GarchParams>,
}

/// Rolling one-step-ahead forecasts of the institution VaR and the system
/// CoVaR conditional on the institution's VaR exceedance.
///
/// For each refit point (every `refit_stride` days) the marginal filters
/// are re-estimated on the trailing window and the residual pair feeds the
/// static tail machinery; between refits, parameters stay fixed while the
/// conditional recursions advance daily. Refit failures invalidate their
/// block's rows rather than aborting the run.
pub fn rolling_forecast(
    series_i: &[f64],
    series_s: &[f64],
    config: &RollingConfig,
) -> Result<Vec<ForecastRow>> {
    if series_i.len() != series_s.len() {
        return Err(Error::Domain("paired series lengths differ".into()));
    }
    let n = series_i.len();
    if n <= config.window {
        return Err(Error::Domain(format!(
            "series length {n} must exceed the window {}",
            config.window
        )));
    }
    if config.refit_stride == 0 {
        return Err(Error::Domain("refit stride must be ≥ 1".into()));
    }

    let refit_points: Vec<usize> = (config.window..n).step_by(config.refit_stride).collect();
    let blocks: Vec<Result<RefitBlock>> = refit_points
        .par_iter()
        .enumerate()
        .map(|(_refit_id, &t0)| {
            let lo = t0 - config.window;
            let win_i = &series_i[lo..t0];
            let win_s = &series_s[lo..t0];
            let (z_i, z_s, params_i, params_s) = match config.filter {
                FilterMode::ArGarchSkewT => {
                    let fit_i = fit_ar_garch(win_i)?;
                    let fit_s = fit_ar_garch(win_s)?;
                    (
                        realized_residuals(win_i, &fit_i)?,
                        realized_residuals(win_s, &fit_s)?,
                        Some(fit_i.params()),
                        Some(fit_s.params()),
                    )
                }
                FilterMode::Identity => (win_i.to_vec(), win_s.to_vec(), None, None),
            };

            let sample = LossPairSample::new(z_i.clone(), z_s)?;
            let est = estimate_covar(&sample, config.family, config.levels, &config.covar)?;
            let k1 = est.k1;
            let var_z_i = weissman_quantile(&z_i, k1, hill(&z_i, k1)?, config.levels.p1())?;
            Ok(RefitBlock {
                var_z_i,
                covar_z: est.value,
                garch_i: params_i,
                garch_s: params_s,
            })
        })
        .collect();

    let mut rows = Vec::with_capacity(n - config.window);
    for (refit_id, &t0) in refit_points.iter().enumerate() {
        let t_end = (t0 + config.refit_stride).min(n);
        match &blocks[refit_id] {
            Ok(block) => {
                for t in t0..t_end {
                    let lo = t - config.window;
                    let ((mu_i, sd_i), (mu_s, sd_s)) = match config.filter {
                        FilterMode::ArGarchSkewT => (
                            one_step_ahead(&block.garch_i.unwrap(), series_i, lo, t),
                            one_step_ahead(&block.garch_s.unwrap(), series_s, lo, t),
                        ),
                        FilterMode::Identity => ((0.0, 1.0), (0.0, 1.0)),
                    };
                    rows.push(ForecastRow {
                        t,
                        var_i: Some(mu_i + sd_i * block.var_z_i),
                        covar_s_given_i: Some(mu_s + sd_s * block.covar_z),
                        realized_x_i: series_i[t],
                        realized_x_s: series_s[t],
                        refit_id,
                    });
                }
            }
            Err(_) => {
                for t in t0..t_end {
                    rows.push(ForecastRow {
                        t,
                        var_i: None,
                        covar_s_given_i: None,
                        realized_x_i: series_i[t],
                        realized_x_s: series_s[t],
                        refit_id,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Simulate an AR(1)-GARCH(1,1) path with standardized skew-t innovations;
/// used by recovery tests and the end-to-end pipeline smoke data.
pub fn simulate_ar_garch(
    n: usize,
    p: &SimGarchParams,
    innovations: &[f64],
) -> Result<Vec<f64>> {
    if innovations.len() < n {
        return Err(Error::Domain("not enough innovations supplied".into()));
    }
    let uncond_var = p.beta0 / (1.0 - p.beta1 - p.beta2);
    let mut out = Vec::with_capacity(n);
    let mut prev_x = p.alpha0 / (1.0 - p.alpha1);
    let mut prev_var = uncond_var;
    let mut prev_eps = 0.0;
    for &z in innovations.iter().take(n) {
        let var = p.beta0 + p.beta1 * prev_eps * prev_eps + p.beta2 * prev_var;
        let mu = p.alpha0 + p.alpha1 * prev_x;
        let x = mu + var.sqrt() * z;
        out.push(x);
        prev_eps = x - mu;
        prev_var = var;
        prev_x = x;
    }
    Ok(out)
}

/// Generating parameters for [`simulate_ar_garch`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimGarchParams {
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
}
