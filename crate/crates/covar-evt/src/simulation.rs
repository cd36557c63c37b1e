//! Exact samplers and Monte Carlo study harness for the five dependence
//! models.
//!
//! The four extreme value families carry unit Fréchet margins and are
//! sampled by conditional-CDF inversion: the first coordinate inverts the
//! Fréchet CDF directly and the second solves `∂C/∂u = w` by bracketed
//! bisection in copula scale. The partial derivative is available in
//! closed form for every family through the stable tail dependence
//! function `l` and its first partial, including the bilogistic where the
//! envelope of the spectral max makes `∂l/∂a = t*^{1-α}` with `t*` the
//! branch crossing point. The bivariate t model is sampled from its
//! normal-mixture representation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::covar::{exact_eta_p, solve_eta_star, true_covar_oracle, RiskLevel};
use crate::empirical::LossPairSample;
use crate::error::{Error, Result};
use crate::math::dist::{frechet_cdf, frechet_quantile, norm_cdf, t_cdf, t_quantile};
use crate::math::quadrature::adaptive_gk;
use crate::math::root::bisect;
use crate::mestimator::{fit_tdf, fit_tdf_local, TestFunctionSet};
use crate::tail::{hill, select_k_bootstrap, weissman_quantile, SelectKConfig};
use crate::tdf::{TdfFamily, TdfModel};

/// Margins attached to a generative model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Margins {
    UnitFrechet,
    StudentT { nu: f64 },
}

/// A fully specified bivariate distribution used for data generation and
/// for computing true risk-measure values. Extreme value families carry
/// unit Fréchet margins; the Student-t family carries its own t margins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerativeModel {
    tdf: TdfModel,
}

impl GenerativeModel {
    pub fn new(tdf: TdfModel) -> Self {
        GenerativeModel { tdf }
    }

    pub fn tdf(&self) -> &TdfModel {
        &self.tdf
    }

    pub fn family(&self) -> TdfFamily {
        self.tdf.family()
    }

    pub fn margins(&self) -> Margins {
        match self.family() {
            TdfFamily::StudentT => Margins::StudentT { nu: self.tdf.params()[0] },
            _ => Margins::UnitFrechet,
        }
    }

    /// True tail index of the margins: 1 for unit Fréchet, 1/ν for t.
    pub fn true_gamma(&self) -> f64 {
        match self.margins() {
            Margins::UnitFrechet => 1.0,
            Margins::StudentT { nu } => 1.0 / nu,
        }
    }

    pub fn margin_cdf(&self, v: f64) -> f64 {
        match self.margins() {
            Margins::UnitFrechet => frechet_cdf(v),
            Margins::StudentT { nu } => t_cdf(v, nu),
        }
    }

    /// Margin quantile at non-exceedance level `u`.
    pub fn margin_quantile(&self, u: f64) -> f64 {
        match self.margins() {
            Margins::UnitFrechet => frechet_quantile(u),
            Margins::StudentT { nu } => t_quantile(u, nu),
        }
    }

    /// True Value-at-Risk at exceedance probability `p`.
    pub fn margin_var(&self, p: f64) -> f64 {
        self.margin_quantile(1.0 - p)
    }

    /// Joint survival `P(X > a, Y > b)`.
    ///
    /// Extreme value families use inclusion-exclusion with the closed-form
    /// joint CDF `exp(-l(1/a, 1/b))`; the bivariate t integrates its
    /// conditional CDF over the margin, avoiding 2-D quadrature.
    pub fn joint_survival(&self, a: f64, b: f64) -> Result<f64> {
        match self.family() {
            TdfFamily::StudentT => {
                let (nu, rho) = (self.tdf.params()[0], self.tdf.params()[1]);
                t_joint_survival(nu, rho, a, b)
            }
            _ => {
                if a <= 0.0 || b <= 0.0 {
                    // Fréchet support is (0, ∞); below it one event is sure.
                    let sa = if a <= 0.0 { 1.0 } else { -(-1.0 / a).exp_m1() };
                    let sb = if b <= 0.0 { 1.0 } else { -(-1.0 / b).exp_m1() };
                    return Ok(sa.min(sb));
                }
                let v = stdf_l(&self.tdf, 1.0 / a, 1.0 / b);
                // P = expm1(-V) - expm1(-1/a) - expm1(-1/b), exact for small tails.
                Ok(((-v).exp_m1() - (-1.0 / a).exp_m1() - (-1.0 / b).exp_m1()).max(0.0))
            }
        }
    }

    /// Draw `n` i.i.d. pairs; deterministic given `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<LossPairSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with_rng(n, &mut rng)
    }

    pub fn sample_with_rng(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<LossPairSample> {
        match self.family() {
            TdfFamily::StudentT => {
                let (nu, rho) = (self.tdf.params()[0], self.tdf.params()[1]);
                sample_bivariate_t(nu, rho, n, rng)
            }
            _ => sample_bivariate_evd(&self.tdf, n, rng),
        }
    }
}

// --- Stable tail dependence function ----------------------------------------

/// `l(a, b) = a + b - R(a, b)` in closed form for the extreme value
/// families; the joint CDF in Fréchet coordinates is `exp(-l(1/x, 1/y))`.
pub(crate) fn stdf_l(model: &TdfModel, a: f64, b: f64) -> f64 {
    if a == 0.0 {
        return b;
    }
    if b == 0.0 {
        return a;
    }
    a + b - model.eval_r_fast(a, b)
}

/// First partial `∂l/∂a`, used by the conditional sampler.
fn stdf_l1(model: &TdfModel, a: f64, b: f64) -> f64 {
    if b == 0.0 {
        return 1.0;
    }
    let p = model.params();
    match model.family() {
        TdfFamily::Logistic => logistic_l1(p[0], a, b),
        TdfFamily::HuslerReiss => norm_cdf(1.0 / p[0] + p[0] / 2.0 * (a / b).ln()),
        TdfFamily::Bilogistic => {
            // ∂l/∂a = t*^{1-α} by the envelope of the spectral max; taken
            // from the crossing logit so extreme ratios keep precision.
            let z = crate::tdf::bilog_crossing_logit(p[0], p[1], a, b);
            (-(1.0 - p[0]) * (-z).exp().ln_1p()).exp()
        }
        TdfFamily::AsymLogistic => {
            let (theta, psi1, psi2) = (p[0], p[1], p[2]);
            if psi1 == 0.0 {
                return 1.0;
            }
            (1.0 - psi1) + psi1 * logistic_l1(theta, psi1 * a, psi2 * b)
        }
        TdfFamily::StudentT => unreachable!("t model has no stable tail dependence sampler"),
    }
}

/// `∂/∂a (a^{1/θ} + b^{1/θ})^θ = a^{1/θ-1}·(a^{1/θ}+b^{1/θ})^{θ-1}`,
/// evaluated in log space.
fn logistic_l1(theta: f64, a: f64, b: f64) -> f64 {
    if b == 0.0 || theta == 1.0 {
        return 1.0;
    }
    let la = a.ln() / theta;
    let lb = b.ln() / theta;
    let lse = la.max(lb) + (-(la - lb).abs()).exp().ln_1p();
    ((1.0 / theta - 1.0) * a.ln() + (theta - 1.0) * lse).exp()
}

// --- Samplers -----------------------------------------------------------------

/// Sample an extreme value family with unit Fréchet margins by conditional
/// inversion: `X` from the Fréchet quantile, then `V | U = u` by bracketed
/// bisection of `∂C/∂u (u, v) = exp(1/x - l(1/x, 1/y))·l₁(1/x, 1/y)` to
/// 1e-12 in copula scale.
pub fn sample_bivariate_evd(
    model: &TdfModel,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LossPairSample> {
    if model.family() == TdfFamily::StudentT {
        return Err(Error::Domain(
            "conditional Fréchet sampler applies to extreme value families only".into(),
        ));
    }
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let u = open_unit(rng);
        let w = open_unit(rng);
        let x = frechet_quantile(u);
        let inv_x = 1.0 / x;
        let cond = |v: f64| {
            let y = frechet_quantile(v);
            (inv_x - stdf_l(model, inv_x, 1.0 / y)).exp() * stdf_l1(model, inv_x, 1.0 / y)
        };
        let v = bisect(|v| cond(v) - w, 1e-300, 1.0 - 1e-16, 1e-12)?;
        xs.push(x);
        ys.push(frechet_quantile(v));
    }
    LossPairSample::new(xs, ys)
}

/// Sample the standard bivariate t as a correlated normal pair scaled by
/// `sqrt(ν/χ²_ν)`.
pub fn sample_bivariate_t(
    nu: f64,
    rho: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LossPairSample> {
    if nu <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "t degrees of freedom {nu} must be > 0"
        )));
    }
    if !(-1.0..1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!(
            "correlation {rho} outside (-1, 1)"
        )));
    }
    let chi = ChiSquared::new(nu)
        .map_err(|e| Error::InvalidParameter(format!("chi-square setup: {e}")))?;
    let cross = (1.0 - rho * rho).sqrt();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let scale = (nu / chi.sample(rng)).sqrt();
        xs.push(z1 * scale);
        ys.push((rho * z1 + cross * z2) * scale);
    }
    LossPairSample::new(xs, ys)
}

fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 && u < 1.0 {
            return u;
        }
    }
}

/// Joint survival of the standard bivariate t via one-dimensional
/// integration of the conditional t CDF over the conditioning margin:
/// `Y | X = x` is t with `ν+1` degrees of freedom, location `ρx` and
/// scale `sqrt((ν + x²)(1 - ρ²)/(ν + 1))`.
fn t_joint_survival(nu: f64, rho: f64, a: f64, b: f64) -> Result<f64> {
    let lo = t_cdf(a, nu);
    let integrand = |u: f64| {
        let x = t_quantile(u, nu);
        let scale = ((nu + x * x) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
        1.0 - t_cdf((b - rho * x) / scale, nu + 1.0)
    };
    adaptive_gk(&integrand, lo, 1.0, 1e-12)
}

// --- Monte Carlo study ---------------------------------------------------------

/// Which estimator variants a study runs; ingredients flagged `true` are
/// frozen at their exact values instead of being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VariantFlags {
    pub full: bool,
    pub true_gamma: bool,
    pub true_eta_star: bool,
    pub true_eta: bool,
}

impl Default for VariantFlags {
    fn default() -> Self {
        VariantFlags {
            full: true,
            true_gamma: true,
            true_eta_star: true,
            true_eta: true,
        }
    }
}

/// Configuration of one Monte Carlo study.
#[derive(Debug, Clone, Serialize)]
pub struct McStudyConfig {
    pub model: GenerativeModel,
    pub n: usize,
    pub reps: usize,
    pub p: f64,
    pub m: usize,
    pub g: TestFunctionSet,
    pub variants: VariantFlags,
    pub master_seed: u64,
    pub k_bootstrap: SelectKConfig,
    /// Starting values for the dependence fit. Studies follow the common
    /// simulation convention of starting the local fit at the generating
    /// parameters; `None` falls back to the data-driven heuristics.
    pub fit_init: Option<Vec<f64>>,
}

impl McStudyConfig {
    /// Reference study setup per family: parameter values, sample sizes,
    /// threshold counts and test functions used throughout the simulation
    /// studies, at risk level p = 0.05 with 100 replications.
    pub fn preset(family: TdfFamily) -> Self {
        let (tdf, n, m): (TdfModel, usize, usize) = match family {
            TdfFamily::Logistic => (TdfModel::logistic(0.6).unwrap(), 2000, 180),
            TdfFamily::HuslerReiss => (TdfModel::husler_reiss(2.5).unwrap(), 2000, 280),
            TdfFamily::Bilogistic => (TdfModel::bilogistic(0.4, 0.7).unwrap(), 2000, 180),
            TdfFamily::AsymLogistic => {
                (TdfModel::asym_logistic(0.6, 0.5, 0.8).unwrap(), 2500, 180)
            }
            TdfFamily::StudentT => (TdfModel::student_t(5.0, 0.6).unwrap(), 3000, 100),
        };
        let tdf_params = tdf.params().to_vec();
        McStudyConfig {
            model: GenerativeModel::new(tdf),
            n,
            reps: 100,
            p: 0.05,
            m,
            g: TestFunctionSet::default_for(family),
            variants: VariantFlags::default(),
            master_seed: 0,
            k_bootstrap: SelectKConfig::default(),
            fit_init: Some(tdf_params),
        }
    }
}

/// Per-replication estimates retained for diagnostics and density plots.
#[derive(Debug, Clone, Serialize)]
pub struct McReplication {
    pub rep: usize,
    pub gamma_hat: f64,
    pub eta_star_hat: f64,
    pub var_hat: f64,
    pub k: usize,
    pub covar_full: Option<f64>,
    pub covar_true_gamma: Option<f64>,
    pub covar_true_eta_star: Option<f64>,
    pub covar_true_eta: Option<f64>,
}

/// Location/scale summary of one estimator variant across replications.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct VariantSummary {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
}

/// Full study output: true values, per-variant summaries, per-replication
/// detail and the number of failed replications.
#[derive(Debug, Clone, Serialize)]
pub struct McSummary {
    pub true_covar: f64,
    pub true_gamma: f64,
    pub true_eta_star: f64,
    pub true_eta: f64,
    pub full: Option<VariantSummary>,
    pub true_gamma_variant: Option<VariantSummary>,
    pub true_eta_star_variant: Option<VariantSummary>,
    pub true_eta_variant: Option<VariantSummary>,
    pub replications: Vec<McReplication>,
    pub failures: usize,
}

fn summarize(values: &[f64]) -> Option<VariantSummary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    Some(VariantSummary {
        mean,
        median,
        sd: var.sqrt(),
    })
}

/// Run the Monte Carlo study: for each replication, simulate a sample,
/// pick the Hill fraction by subsample bootstrap (with `k2 = k1`), fit the
/// tail dependence family by method of moments, solve the adjustment
/// factor and compose the estimate, alongside the variants with individual
/// ingredients frozen at their exact values.
///
/// Replications run in parallel on independent seed streams; the summary
/// is reduced in replication order so identical seeds give identical
/// output regardless of thread scheduling. Replication-level failures are
/// counted rather than fatal.
pub fn mc_study(config: &McStudyConfig) -> Result<McSummary> {
    let levels = RiskLevel::symmetric(config.p)?;
    let true_covar = true_covar_oracle(&config.model, config.p)?;
    let true_gamma = config.model.true_gamma();
    let true_eta_star = solve_eta_star(config.model.tdf(), levels)?;
    let true_eta = exact_eta_p(&config.model, config.p)?;
    let family = config.model.family();

    let results: Vec<Result<McReplication>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.master_seed);
            rng.set_stream(rep as u64 + 1);
            let sample = config.model.sample_with_rng(config.n, &mut rng)?;

            let k_cfg = SelectKConfig {
                seed: config
                    .master_seed
                    .wrapping_mul(0x9e37_79b9)
                    .wrapping_add(rep as u64),
                ..config.k_bootstrap
            };
            let k = select_k_bootstrap(sample.ys(), &k_cfg)?.k;
            let gamma_hat = hill(sample.ys(), k)?;

            let fit = match &config.fit_init {
                Some(init) => fit_tdf_local(&sample, config.m, family, &config.g, init)?,
                None => fit_tdf(&sample, config.m, family, &config.g, None)?,
            };
            let eta_star_hat = solve_eta_star(&fit.model(), levels)?;
            let var_hat = weissman_quantile(sample.ys(), k, gamma_hat, config.p)?;

            let compose = |eta: f64, gamma: f64, var: f64| var * eta.powf(-gamma);
            let var_true_gamma = weissman_quantile(sample.ys(), k, true_gamma, config.p)?;

            Ok(McReplication {
                rep,
                gamma_hat,
                eta_star_hat,
                var_hat,
                k,
                covar_full: config
                    .variants
                    .full
                    .then(|| compose(eta_star_hat, gamma_hat, var_hat)),
                covar_true_gamma: config
                    .variants
                    .true_gamma
                    .then(|| compose(eta_star_hat, true_gamma, var_true_gamma)),
                covar_true_eta_star: config
                    .variants
                    .true_eta_star
                    .then(|| compose(true_eta_star, gamma_hat, var_hat)),
                covar_true_eta: config
                    .variants
                    .true_eta
                    .then(|| compose(true_eta, gamma_hat, var_hat)),
            })
        })
        .collect();

    let mut replications = Vec::with_capacity(config.reps);
    let mut failures = 0;
    for r in results {
        match r {
            Ok(rep) => replications.push(rep),
            Err(_) => failures += 1,
        }
    }

    let collect = |f: fn(&McReplication) -> Option<f64>| -> Vec<f64> {
        replications.iter().filter_map(f).collect()
    };
    Ok(McSummary {
        true_covar,
        true_gamma,
        true_eta_star,
        true_eta,
        full: summarize(&collect(|r| r.covar_full)),
        true_gamma_variant: summarize(&collect(|r| r.covar_true_gamma)),
        true_eta_star_variant: summarize(&collect(|r| r.covar_true_eta_star)),
        true_eta_variant: summarize(&collect(|r| r.covar_true_eta)),
        replications,
        failures,
    })
}
