//! Heavy-tail index and extreme quantile estimation for the system margin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Tail index and sample-fraction choices for one margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailFit {
    pub gamma_hat: f64,
    /// Sample fraction used by the Hill estimator.
    pub k1: usize,
    /// Sample fraction anchoring the quantile extrapolation.
    pub k2: usize,
    pub n: usize,
}

/// Descending order statistics of a series (largest first).
fn sorted_desc(ys: &[f64]) -> Vec<f64> {
    let mut v = ys.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn hill_from_sorted(desc: &[f64], k1: usize) -> Result<f64> {
    let n = desc.len();
    if k1 == 0 || k1 >= n {
        return Err(Error::Domain(format!(
            "hill sample fraction k1 = {k1} must satisfy 1 ≤ k1 < n = {n}"
        )));
    }
    let threshold = desc[k1];
    if threshold <= 0.0 {
        return Err(Error::Domain(format!(
            "hill needs the top k1+1 order statistics positive; Y_(n-k1) = {threshold}"
        )));
    }
    let log_thr = threshold.ln();
    let sum: f64 = desc[..k1].iter().map(|&v| v.ln() - log_thr).sum();
    Ok(sum / k1 as f64)
}

/// Hill estimator of the tail index:
/// `γ̂ = (1/k1)·Σ_{i=1}^{k1} log Y_(n,n-i+1) - log Y_(n,n-k1)`.
pub fn hill(ys: &[f64], k1: usize) -> Result<f64> {
    hill_from_sorted(&sorted_desc(ys), k1)
}

/// Weissman extreme quantile estimator at exceedance probability `p`:
/// `VaR̂(p) = Y_(n,n-k2)·(k2/(n·p))^γ`.
pub fn weissman_quantile(ys: &[f64], k2: usize, gamma: f64, p: f64) -> Result<f64> {
    let desc = sorted_desc(ys);
    weissman_from_sorted(&desc, k2, gamma, p)
}

pub(crate) fn weissman_from_sorted(desc: &[f64], k2: usize, gamma: f64, p: f64) -> Result<f64> {
    let n = desc.len();
    if k2 == 0 || k2 >= n {
        return Err(Error::Domain(format!(
            "weissman sample fraction k2 = {k2} must satisfy 1 ≤ k2 < n = {n}"
        )));
    }
    if !(0.0..1.0).contains(&p) || p == 0.0 {
        return Err(Error::Domain(format!("exceedance probability p = {p} not in (0,1)")));
    }
    if gamma < 0.0 {
        return Err(Error::Domain(format!("tail index gamma = {gamma} must be ≥ 0")));
    }
    Ok(desc[k2] * (k2 as f64 / (n as f64 * p)).powf(gamma))
}

/// Configuration of the two-step subsample bootstrap for choosing the Hill
/// sample fraction (Danielsson, de Haan, Peng and de Vries).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectKConfig {
    /// First subsample size is `ceil(n^exponent)`.
    pub subsample_exponent: f64,
    /// Bootstrap resamples per subsample size.
    pub n_bootstrap: usize,
    pub seed: u64,
}

impl Default for SelectKConfig {
    fn default() -> Self {
        SelectKConfig {
            subsample_exponent: 0.955,
            n_bootstrap: 500,
            seed: 0,
        }
    }
}

/// Outcome of the bootstrap selection; `used_fallback` flags a degenerate
/// criterion that was replaced by the `ceil(0.05·n)` default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KSelection {
    pub k: usize,
    pub used_fallback: bool,
}

/// Mean over bootstrap resamples of `(M*(k) - 2γ*(k)²)²` for every k,
/// where `M*` is the second empirical moment of the log spacings. The
/// asymptotic mean squared error of the Hill estimator is minimized where
/// this criterion is.
fn bootstrap_criterion(
    sorted_sample: &[f64],
    n_sub: usize,
    n_boot: usize,
    rng_seed: u64,
) -> Vec<f64> {
    let k_max = n_sub - 1;
    let results: Vec<Vec<f64>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(b as u64 + 1);
            let mut resample: Vec<f64> = (0..n_sub)
                .map(|_| sorted_sample[rng.random_range(0..sorted_sample.len())])
                .collect();
            resample.sort_by(|a, b| b.total_cmp(a));
            // Prefix sums of the top log order statistics give γ*(k) and
            // M*(k) for every k in one pass.
            let logs: Vec<f64> = resample.iter().map(|&v| v.max(1e-300).ln()).collect();
            let mut prefix = vec![0.0; k_max + 1];
            let mut prefix_sq = vec![0.0; k_max + 1];
            for k in 1..=k_max {
                prefix[k] = prefix[k - 1] + logs[k - 1];
                prefix_sq[k] = prefix_sq[k - 1] + logs[k - 1] * logs[k - 1];
            }
            let mut q = vec![0.0; k_max + 1];
            for k in 1..=k_max {
                // Spacings are relative to the (k+1)-th largest value.
                let base = logs[k];
                let kf = k as f64;
                let gamma = prefix[k] / kf - base;
                let m2 = (prefix_sq[k] - 2.0 * base * prefix[k]) / kf + base * base;
                let dev = m2 - 2.0 * gamma * gamma;
                q[k] = dev * dev;
            }
            q
        })
        .collect();
    let mut mean_q = vec![0.0; k_max + 1];
    for q in &results {
        for (acc, &v) in mean_q.iter_mut().zip(q) {
            *acc += v / n_boot as f64;
        }
    }
    mean_q
}

fn argmin_k(criterion: &[f64]) -> (usize, bool) {
    // k below 2 is excluded: the criterion is trivially small there.
    let lo = 2usize;
    let hi = criterion.len() - 1;
    let mut best_k = lo;
    let mut best = f64::INFINITY;
    for (k, &v) in criterion.iter().enumerate().take(hi + 1).skip(lo) {
        if v < best {
            best = v;
            best_k = k;
        }
    }
    let spread = criterion[lo..=hi]
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), &v| {
            (mn.min(v), mx.max(v))
        });
    let degenerate = !best.is_finite() || spread.1 - spread.0 <= 1e-300;
    (best_k, degenerate)
}

/// Two-step subsample bootstrap choice of the Hill sample fraction.
///
/// Subsample sizes are `n1 = ceil(n^0.955)` and `n2 = ceil(n1²/n)`; the
/// criterion minimizers `k1*(n1)` and `k1*(n2)` combine into
/// `k̂ = (k1*²/k2*)·((log k1*)²/(2·log n1 - log k1*)²)^((log n1 - log k1*)/log n1)`,
/// clamped into `[10, n/2]`. Deterministic given the seed.
pub fn select_k_bootstrap(ys: &[f64], config: &SelectKConfig) -> Result<KSelection> {
    let n = ys.len();
    if n < 500 {
        return Err(Error::Domain(format!(
            "bootstrap k selection needs n ≥ 500, got {n}"
        )));
    }
    let positive: Vec<f64> = ys.iter().copied().filter(|&v| v > 0.0).collect();
    if positive.len() < n / 4 {
        return Err(Error::Degenerate(
            "too few positive observations for tail bootstrap".into(),
        ));
    }
    let sorted = sorted_desc(ys);

    let n1 = (n as f64).powf(config.subsample_exponent).ceil() as usize;
    let n1 = n1.min(n - 1);
    let n2 = ((n1 * n1) as f64 / n as f64).ceil() as usize;
    let n2 = n2.max(16).min(n1 - 1);

    let q1 = bootstrap_criterion(&sorted, n1, config.n_bootstrap, config.seed ^ 0xb001);
    let q2 = bootstrap_criterion(&sorted, n2, config.n_bootstrap, config.seed ^ 0xb002);
    let (k1_star, degenerate1) = argmin_k(&q1);
    let (k2_star, degenerate2) = argmin_k(&q2);

    let fallback = KSelection {
        k: ((0.05 * n as f64).ceil() as usize).clamp(10, n / 2),
        used_fallback: true,
    };
    if degenerate1 || degenerate2 || k2_star == 0 {
        return Ok(fallback);
    }

    let (k1f, n1f) = (k1_star as f64, n1 as f64);
    let exponent = (n1f.ln() - k1f.ln()) / n1f.ln();
    let base = k1f.ln().powi(2) / (2.0 * n1f.ln() - k1f.ln()).powi(2);
    let k_opt = (k1f * k1f / k2_star as f64) * base.powf(exponent);
    if !k_opt.is_finite() || k_opt < 1.0 {
        return Ok(fallback);
    }
    Ok(KSelection {
        k: (k_opt.round() as usize).clamp(10, n / 2),
        used_fallback: false,
    })
}

/// Weissman quantile as a function of `k2`, for the threshold-stability
/// plots used to pick `k2` on real data.
pub fn var_sensitivity(
    ys: &[f64],
    gamma: f64,
    p: f64,
    k_range: std::ops::RangeInclusive<usize>,
) -> Result<Vec<(usize, f64)>> {
    let desc = sorted_desc(ys);
    k_range
        .map(|k| Ok((k, weissman_from_sorted(&desc, k, gamma, p)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Deterministic Pareto(α) quantile grid: survival (i+0.5)/n at entry i.
    fn pareto_grid(alpha: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| ((i as f64 + 0.5) / n as f64).powf(-1.0 / alpha))
            .collect()
    }

    #[test]
    fn hill_exponential_grid_closed_form() {
        // ys = e^1..e^n gives γ̂ = (k+1)/2 for any k.
        let n = 30;
        let ys: Vec<f64> = (1..=n).map(|i| (i as f64).exp()).collect();
        for k in [1usize, 5, 10, 29] {
            let g = hill(&ys, k).unwrap();
            assert!(close(g, (k as f64 + 1.0) / 2.0, 1e-9), "k={k}: {g}");
        }
    }

    #[test]
    fn hill_constant_series_is_zero() {
        let ys = vec![3.5; 100];
        assert_eq!(hill(&ys, 10).unwrap(), 0.0);
    }

    #[test]
    fn hill_pareto_grid_near_quarter() {
        let ys = pareto_grid(4.0, 100_000);
        let g = hill(&ys, 1000).unwrap();
        assert!(close(g, 0.25, 0.02), "gamma {g}");
    }

    #[test]
    fn hill_rejects_nonpositive_threshold() {
        let ys = vec![-1.0, -2.0, 3.0, 4.0];
        assert!(hill(&ys, 3).is_err());
    }

    #[test]
    fn hill_scale_and_permutation_invariant() {
        let ys = pareto_grid(3.0, 500);
        let g = hill(&ys, 50).unwrap();
        let scaled: Vec<f64> = ys.iter().map(|v| 17.0 * v).collect();
        assert!(close(hill(&scaled, 50).unwrap(), g, 1e-12));
        let mut shuffled = ys.clone();
        shuffled.reverse();
        shuffled.swap(3, 333);
        assert!(close(hill(&shuffled, 50).unwrap(), g, 1e-12));
    }

    #[test]
    fn weissman_no_extrapolation_identities() {
        let ys = pareto_grid(4.0, 1000);
        let desc = sorted_desc(&ys);
        // p = k2/n → extrapolation factor 1.
        let v = weissman_quantile(&ys, 100, 0.77, 0.1).unwrap();
        assert!(close(v, desc[100], 1e-12));
        // γ = 0 → the order statistic for any p.
        let v = weissman_quantile(&ys, 100, 0.0, 0.001).unwrap();
        assert!(close(v, desc[100], 1e-12));
    }

    #[test]
    fn weissman_pareto_extrapolation() {
        let alpha = 4.0;
        let ys = pareto_grid(alpha, 100_000);
        let p = 0.001;
        let v = weissman_quantile(&ys, 1000, 1.0 / alpha, p).unwrap();
        let truth = (1.0 / p).powf(1.0 / alpha);
        assert!((v / truth - 1.0).abs() < 0.02, "{v} vs {truth}");
    }

    #[test]
    fn weissman_monotone_in_gamma_and_p() {
        let ys = pareto_grid(2.0, 5000);
        let v1 = weissman_quantile(&ys, 200, 0.3, 0.001).unwrap();
        let v2 = weissman_quantile(&ys, 200, 0.5, 0.001).unwrap();
        assert!(v2 > v1);
        let v3 = weissman_quantile(&ys, 200, 0.3, 0.0001).unwrap();
        assert!(v3 > v1);
    }

    #[test]
    fn select_k_requires_minimum_sample() {
        let ys = pareto_grid(4.0, 499);
        assert!(select_k_bootstrap(&ys, &SelectKConfig::default()).is_err());
    }

    #[test]
    fn select_k_deterministic() {
        let ys = pareto_grid(4.0, 1000);
        let cfg = SelectKConfig {
            n_bootstrap: 100,
            seed: 42,
            ..Default::default()
        };
        let a = select_k_bootstrap(&ys, &cfg).unwrap();
        let b = select_k_bootstrap(&ys, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn select_k_bounds_respected() {
        let ys = pareto_grid(2.0, 800);
        let cfg = SelectKConfig {
            n_bootstrap: 50,
            seed: 9,
            ..Default::default()
        };
        let sel = select_k_bootstrap(&ys, &cfg).unwrap();
        assert!(sel.k >= 10 && sel.k <= 400, "k = {}", sel.k);
    }

    #[test]
    fn select_k_recovers_pareto_index() {
        // Hill at the bootstrap-selected k should land within 15% of 1/α
        // on exact Pareto quantile grids across seeds.
        let alpha = 4.0;
        let ys = pareto_grid(alpha, 5000);
        for seed in 0..10 {
            let cfg = SelectKConfig {
                n_bootstrap: 200,
                seed,
                ..Default::default()
            };
            let sel = select_k_bootstrap(&ys, &cfg).unwrap();
            let g = hill(&ys, sel.k).unwrap();
            assert!(
                (g - 0.25).abs() / 0.25 < 0.15,
                "seed {seed}: k = {}, gamma = {g}",
                sel.k
            );
        }
    }

    #[test]
    fn sensitivity_singleton_matches_weissman() {
        let ys = pareto_grid(4.0, 2000);
        let curve = var_sensitivity(&ys, 0.25, 0.01, 55..=55).unwrap();
        assert_eq!(curve.len(), 1);
        assert_eq!(curve[0].1, weissman_quantile(&ys, 55, 0.25, 0.01).unwrap());
    }

    #[test]
    fn sensitivity_flat_for_exact_pareto() {
        // On an exact Pareto grid with the true γ the curve is flat to a
        // few percent over the central third of the k range.
        let alpha = 4.0;
        let ys = pareto_grid(alpha, 10_000);
        let curve = var_sensitivity(&ys, 1.0 / alpha, 0.001, 100..=3000).unwrap();
        let central: Vec<f64> = curve
            .iter()
            .filter(|(k, _)| (1066..=2033).contains(k))
            .map(|&(_, v)| v)
            .collect();
        let mean = central.iter().sum::<f64>() / central.len() as f64;
        for v in central {
            assert!((v / mean - 1.0).abs() < 0.03, "{v} vs mean {mean}");
        }
    }

    #[test]
    fn sensitivity_gamma_zero_is_order_statistics() {
        let ys = pareto_grid(3.0, 1000);
        let desc = sorted_desc(&ys);
        let curve = var_sensitivity(&ys, 0.0, 0.001, 10..=20).unwrap();
        for (k, v) in curve {
            assert_eq!(v, desc[k]);
        }
    }
}
