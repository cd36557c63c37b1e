//! Calibration and comparative evaluation of VaR/CoVaR forecasts:
//! unconditional coverage tests, consistent quantile scores and
//! traffic-light comparative backtests.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::math::dist::{chi2_sf, norm_quantile};

/// Outcome of an unconditional coverage test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageResult {
    /// Observed exceedance count.
    pub observed: usize,
    /// Expected count under the nominal level.
    pub expected: f64,
    /// Likelihood-ratio statistic, chi-square(1) under the null.
    pub statistic: f64,
    pub p_value: f64,
}

/// Per-day quantile scores of one forecasting method on a fixed set of
/// evaluation days.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreSeries {
    scores: Vec<f64>,
}

impl ScoreSeries {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("scores must be finite".into()));
        }
        Ok(ScoreSeries { scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.scores
    }

    pub fn mean(&self) -> f64 {
        if self.scores.is_empty() {
            return f64::NAN;
        }
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }
}

/// Classical 1-homogeneous scoring function for a (1-p2)-quantile
/// forecast `r` against realization `x`:
/// `S(r, x) = (p2 - 1{x > r})·r + 1{x > r}·x`.
/// Lower average scores mean better forecasts; the indicator is strict,
/// so a realization exactly on the forecast scores `p2·r`.
pub fn quantile_score(r: f64, x: f64, p2: f64) -> f64 {
    if x > r {
        (p2 - 1.0) * r + x
    } else {
        p2 * r
    }
}

fn binomial_lr_test(observed: usize, n: usize, p: f64) -> CoverageResult {
    let expected = n as f64 * p;
    let x = observed as f64;
    let nf = n as f64;
    // Log-likelihood under a given exceedance probability; 0·log(0) = 0.
    let ll = |q: f64| -> f64 {
        let mut v = 0.0;
        if x > 0.0 {
            v += x * q.ln();
        }
        if x < nf {
            v += (nf - x) * (1.0 - q).ln();
        }
        v
    };
    let p_hat = (x / nf).clamp(0.0, 1.0);
    let statistic = (2.0 * (ll(p_hat) - ll(p))).max(0.0);
    CoverageResult {
        observed,
        expected,
        statistic,
        p_value: chi2_sf(statistic, 1.0),
    }
}

/// Unconditional coverage test for VaR: likelihood-ratio test of the
/// binomial exceedance count against the nominal probability `p1`.
pub fn uc_test_var(exceed_count: usize, n: usize, p1: f64) -> Result<CoverageResult> {
    if exceed_count > n {
        return Err(Error::Domain(format!(
            "exceedance count {exceed_count} exceeds number of days {n}"
        )));
    }
    if !(0.0..1.0).contains(&p1) || p1 == 0.0 {
        return Err(Error::Domain(format!("p1 = {p1} not in (0, 1)")));
    }
    Ok(binomial_lr_test(exceed_count, n, p1))
}

/// Unconditional coverage test for CoVaR, conditioning on the days where
/// the institution violated its VaR: among those `var_exceed` days the
/// joint exceedance count should be binomial with probability `p2`, so the
/// expected count is `var_exceed·p2`.
pub fn uc_test_covar(
    joint_exceed: usize,
    var_exceed: usize,
    p2: f64,
) -> Result<CoverageResult> {
    if var_exceed == 0 {
        return Err(Error::Degenerate(
            "no VaR violation days: conditional coverage test undefined".into(),
        ));
    }
    if joint_exceed > var_exceed {
        return Err(Error::Domain(format!(
            "joint exceedances {joint_exceed} exceed VaR violation days {var_exceed}"
        )));
    }
    if !(0.0..1.0).contains(&p2) || p2 == 0.0 {
        return Err(Error::Domain(format!("p2 = {p2} not in (0, 1)")));
    }
    Ok(binomial_lr_test(joint_exceed, var_exceed, p2))
}

/// Comparative-backtest classification of method A against method B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparison {
    /// A's scores are significantly lower (A forecasts better).
    Better,
    /// A's scores are significantly higher.
    Worse,
    Inconclusive,
}

/// Comparative backtest output; `warning` flags degenerate inputs that
/// forced an early classification.
#[derive(Debug, Clone, Serialize)]
pub struct ComparativeResult {
    pub decision: Comparison,
    pub statistic: f64,
    pub warning: Option<String>,
}

/// Newey-West variance of the mean of `d` with lag truncation
/// `floor(T^{1/3})` and Bartlett weights.
fn hac_variance(d: &[f64]) -> f64 {
    let t = d.len();
    let mean = d.iter().sum::<f64>() / t as f64;
    let centered: Vec<f64> = d.iter().map(|v| v - mean).collect();
    let lag_max = (t as f64).powf(1.0 / 3.0).floor() as usize;
    let mut variance = centered.iter().map(|v| v * v).sum::<f64>() / t as f64;
    for lag in 1..=lag_max.min(t - 1) {
        let mut gamma = 0.0;
        for i in lag..t {
            gamma += centered[i] * centered[i - lag];
        }
        gamma /= t as f64;
        variance += 2.0 * (1.0 - lag as f64 / (lag_max as f64 + 1.0)) * gamma;
    }
    variance
}

/// Two one-sided studentized tests on the mean score difference `A - B`
/// with a heteroskedasticity-and-autocorrelation-consistent variance.
/// At test level `level` (default 0.10 in the traffic-light convention),
/// a significantly positive difference classifies A as [`Comparison::Worse`],
/// significantly negative as [`Comparison::Better`].
pub fn comparative_backtest(
    scores_a: &ScoreSeries,
    scores_b: &ScoreSeries,
    level: f64,
) -> Result<ComparativeResult> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::Domain(format!(
            "score series lengths differ: {} vs {}",
            scores_a.len(),
            scores_b.len()
        )));
    }
    if !(0.0..0.5).contains(&level) || level == 0.0 {
        return Err(Error::Domain(format!("test level {level} not in (0, 0.5)")));
    }
    let t = scores_a.len();
    if t < 30 {
        return Ok(ComparativeResult {
            decision: Comparison::Inconclusive,
            statistic: f64::NAN,
            warning: Some(format!("only {t} aligned days; need at least 30")),
        });
    }
    let d: Vec<f64> = scores_a
        .values()
        .iter()
        .zip(scores_b.values())
        .map(|(a, b)| a - b)
        .collect();
    let mean = d.iter().sum::<f64>() / t as f64;
    let variance = hac_variance(&d);
    // Variance at rounding-noise scale relative to the mean difference is
    // treated as exactly degenerate.
    if variance <= 1e-20 * (1.0 + mean * mean) {
        // Degenerate (e.g. constant difference): classify by sign.
        let decision = if mean > 0.0 {
            Comparison::Worse
        } else if mean < 0.0 {
            Comparison::Better
        } else {
            Comparison::Inconclusive
        };
        return Ok(ComparativeResult {
            decision,
            statistic: if mean == 0.0 { 0.0 } else { f64::INFINITY * mean.signum() },
            warning: Some("zero-variance score difference".into()),
        });
    }
    let statistic = mean / (variance / t as f64).sqrt();
    let critical = norm_quantile(1.0 - level);
    let decision = if statistic > critical {
        Comparison::Worse
    } else if statistic < -critical {
        Comparison::Better
    } else {
        Comparison::Inconclusive
    };
    Ok(ComparativeResult {
        decision,
        statistic,
        warning: None,
    })
}

/// Pool score pairs across institutions: each institution's pair is
/// normalized by the mean score of its reference method (the first series)
/// and the normalized days are concatenated, so that a subsequent
/// comparative backtest aggregates evidence across the panel.
pub fn pool_normalized_scores(
    per_institution: &[(ScoreSeries, ScoreSeries)],
) -> Result<(ScoreSeries, ScoreSeries)> {
    if per_institution.is_empty() {
        return Err(Error::Domain("nothing to pool".into()));
    }
    let mut pooled_a = Vec::new();
    let mut pooled_b = Vec::new();
    for (idx, (a, b)) in per_institution.iter().enumerate() {
        if a.len() != b.len() {
            return Err(Error::Domain(format!(
                "institution {idx}: score series lengths differ"
            )));
        }
        let scale = a.mean();
        if !scale.is_finite() || scale.abs() < 1e-300 {
            return Err(Error::Degenerate(format!(
                "institution {idx}: reference score scale is zero"
            )));
        }
        pooled_a.extend(a.values().iter().map(|v| v / scale));
        pooled_b.extend(b.values().iter().map(|v| v / scale));
    }
    Ok((ScoreSeries::new(pooled_a)?, ScoreSeries::new(pooled_b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn quantile_score_branch_values() {
        // No exceedance: p2·r.
        assert!(close(quantile_score(2.0, 1.0, 0.05), 0.1, 1e-15));
        // Exceedance: (p2 - 1)·r + x.
        assert!(close(quantile_score(2.0, 3.0, 0.05), 1.1, 1e-15));
        // Boundary uses the strict inequality: x = r scores p2·r.
        assert!(close(quantile_score(2.0, 2.0, 0.05), 0.1, 1e-15));
    }

    #[test]
    fn quantile_score_minimized_at_true_quantile() {
        // Consistency sanity: over a large sample the mean score is
        // minimized (within noise) at the true quantile versus ±10%
        // perturbed candidates.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p2: f64 = 0.05;
        let xs: Vec<f64> = (0..200_000)
            .map(|_| {
                let u: f64 = rng.random::<f64>().max(1e-12);
                -u.ln() // exponential(1)
            })
            .collect();
        let q_true = -p2.ln();
        let mean_score = |r: f64| xs.iter().map(|&x| quantile_score(r, x, p2)).sum::<f64>() / xs.len() as f64;
        let at_true = mean_score(q_true);
        assert!(at_true < mean_score(q_true * 1.1));
        assert!(at_true < mean_score(q_true * 0.9));
    }

    #[test]
    fn uc_var_null_matching_count() {
        // E = n·p1 exactly → statistic 0, p-value 1.
        let r = uc_test_var(50, 1000, 0.05).unwrap();
        assert!(close(r.statistic, 0.0, 1e-12));
        assert!(close(r.p_value, 1.0, 1e-12));
        assert!(close(r.expected, 50.0, 1e-12));
    }

    #[test]
    fn uc_var_extreme_rejection() {
        let r = uc_test_var(0, 100, 0.5).unwrap();
        assert!(r.p_value < 1e-10, "p {}", r.p_value);
    }

    #[test]
    fn uc_var_reference_cell() {
        // n = 5534 days at p1 = 0.02: expected 110.68; a count of 114 is
        // comfortably inside the null.
        let r = uc_test_var(114, 5534, 0.02).unwrap();
        assert!(close(r.expected, 110.68, 1e-10));
        assert!(close(r.p_value, 0.7511, 2e-2), "p {}", r.p_value);
    }

    #[test]
    fn uc_covar_expected_count_and_cells() {
        let r = uc_test_covar(3, 114, 0.05).unwrap();
        assert!(close(r.expected, 5.7, 1e-12));
        // Conditional cells: 1 joint hit out of 116 and out of 113 days.
        let r = uc_test_covar(1, 116, 0.05).unwrap();
        assert!(close(r.p_value, 0.0121, 5e-3), "p {}", r.p_value);
        let r = uc_test_covar(1, 113, 0.05).unwrap();
        assert!(close(r.p_value, 0.0140, 5e-3), "p {}", r.p_value);
    }

    #[test]
    fn uc_covar_guards() {
        assert!(uc_test_covar(1, 0, 0.05).is_err());
        assert!(uc_test_covar(5, 4, 0.05).is_err());
        assert!(uc_test_var(5, 4, 0.05).is_err());
    }

    #[test]
    fn uc_p_value_unimodal_in_count() {
        // p-value rises to 1 at the expected count then falls again.
        let n = 1000;
        let p = 0.05;
        let expected = 50;
        let mut prev = 0.0;
        for e in 0..=expected {
            let r = uc_test_var(e, n, p).unwrap();
            assert!(r.p_value >= prev - 1e-12, "rising branch at {e}");
            prev = r.p_value;
        }
        prev = 1.0;
        for e in expected..=150 {
            let r = uc_test_var(e, n, p).unwrap();
            assert!(r.p_value <= prev + 1e-12, "falling branch at {e}");
            prev = r.p_value;
        }
    }

    #[test]
    fn comparative_identical_scores_inconclusive() {
        let a = ScoreSeries::new(vec![0.3; 100]).unwrap();
        let r = comparative_backtest(&a, &a, 0.10).unwrap();
        assert_eq!(r.decision, Comparison::Inconclusive);
    }

    #[test]
    fn comparative_constant_offset_classified_by_sign() {
        let base: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let a = ScoreSeries::new(base.iter().map(|v| v + 1.0).collect()).unwrap();
        let b = ScoreSeries::new(base).unwrap();
        let r = comparative_backtest(&a, &b, 0.10).unwrap();
        assert_eq!(r.decision, Comparison::Worse);
        assert!(r.warning.is_some());
        let r = comparative_backtest(&b, &a, 0.10).unwrap();
        assert_eq!(r.decision, Comparison::Better);
    }

    #[test]
    fn comparative_too_few_days() {
        let a = ScoreSeries::new(vec![1.0; 10]).unwrap();
        let b = ScoreSeries::new(vec![2.0; 10]).unwrap();
        let r = comparative_backtest(&a, &b, 0.10).unwrap();
        assert_eq!(r.decision, Comparison::Inconclusive);
        assert!(r.warning.is_some());
    }

    #[test]
    fn comparative_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = ScoreSeries::new((0..500).map(|_| rng.random::<f64>() + 0.1).collect()).unwrap();
        let b = ScoreSeries::new((0..500).map(|_| rng.random::<f64>()).collect()).unwrap();
        let ab = comparative_backtest(&a, &b, 0.10).unwrap();
        let ba = comparative_backtest(&b, &a, 0.10).unwrap();
        assert!(close(ab.statistic, -ba.statistic, 1e-12));
        let flipped = match ab.decision {
            Comparison::Better => Comparison::Worse,
            Comparison::Worse => Comparison::Better,
            Comparison::Inconclusive => Comparison::Inconclusive,
        };
        assert_eq!(ba.decision, flipped);
    }

    #[test]
    fn comparative_power_against_shifted_scores() {
        // i.i.d. normal differences with mean 0.2, sd 1, T = 1000 should be
        // flagged "worse" in at least 95% of seeds.
        let mut hits = 0;
        let trials = 40;
        for seed in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let base: Vec<f64> = (0..1000)
                .map(|_| {
                    use rand_distr::{Distribution, StandardNormal};
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z
                })
                .collect();
            let a = ScoreSeries::new(base.iter().map(|v| v + 0.2).collect()).unwrap();
            let b = ScoreSeries::new(base).unwrap();
            if comparative_backtest(&a, &b, 0.10).unwrap().decision == Comparison::Worse {
                hits += 1;
            }
        }
        assert!(hits * 100 >= trials * 95, "{hits}/{trials}");
    }

    #[test]
    fn pooling_single_institution_passthrough() {
        let a = ScoreSeries::new(vec![0.2, 0.4, 0.6]).unwrap();
        let b = ScoreSeries::new(vec![0.3, 0.3, 0.3]).unwrap();
        let (pa, pb) = pool_normalized_scores(&[(a.clone(), b.clone())]).unwrap();
        let scale = a.mean();
        for (orig, pooled) in a.values().iter().zip(pa.values()) {
            assert!(close(orig / scale, *pooled, 1e-15));
        }
        for (orig, pooled) in b.values().iter().zip(pb.values()) {
            assert!(close(orig / scale, *pooled, 1e-15));
        }
    }

    #[test]
    fn pooling_two_identical_institutions_same_decision() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let base: Vec<f64> = (0..200).map(|_| rng.random::<f64>() + 0.5).collect();
        let a = ScoreSeries::new(base.iter().map(|v| v + 0.05).collect()).unwrap();
        let b = ScoreSeries::new(base).unwrap();
        let single = comparative_backtest(&a, &b, 0.10).unwrap().decision;
        let (pa, pb) =
            pool_normalized_scores(&[(a.clone(), b.clone()), (a.clone(), b.clone())]).unwrap();
        let pooled = comparative_backtest(&pa, &pb, 0.10).unwrap().decision;
        assert_eq!(single, pooled);
    }

    #[test]
    fn pooling_aggregates_weak_evidence() {
        // Ten institutions each mildly favoring method B: most individual
        // tests inconclusive, the pooled test decisive.
        let mut individual_conclusive = 0;
        let mut pairs = Vec::new();
        for seed in 0..10u64 {
            use rand_distr::{Distribution, StandardNormal};
            let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
            let mut draw = |shift: f64| -> ScoreSeries {
                ScoreSeries::new(
                    (0..150)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            1.0 + 0.2 * z + shift
                        })
                        .collect(),
                )
                .unwrap()
            };
            let a = draw(0.02);
            let b = draw(0.0);
            if comparative_backtest(&a, &b, 0.10).unwrap().decision != Comparison::Inconclusive
            {
                individual_conclusive += 1;
            }
            pairs.push((a, b));
        }
        let (pa, pb) = pool_normalized_scores(&pairs).unwrap();
        let pooled = comparative_backtest(&pa, &pb, 0.10).unwrap();
        assert_eq!(pooled.decision, Comparison::Worse);
        assert!(
            individual_conclusive <= 5,
            "individual tests conclusive: {individual_conclusive}/10"
        );
    }

    #[test]
    fn pooling_guards() {
        assert!(pool_normalized_scores(&[]).is_err());
        let zero = ScoreSeries::new(vec![0.0; 50]).unwrap();
        let b = ScoreSeries::new(vec![0.1; 50]).unwrap();
        assert!(pool_normalized_scores(&[(zero, b)]).is_err());
    }
}
