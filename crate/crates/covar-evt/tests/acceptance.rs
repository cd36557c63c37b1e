//! Acceptance suite: exercises every reference number and property gate,
//! one test per criterion, each printing a pass/fail line.
//!
//! Run with `cargo test -p covar-evt --test acceptance -- --nocapture`
//! to see the per-criterion summary lines.

use std::collections::HashMap;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use covar_evt::covar::{solve_eta_star, true_covar_oracle, RiskLevel};
use covar_evt::math::dist::frechet_cdf;
use covar_evt::mestimator::{fit_tdf_to_moments, phi, TestFunctionSet};
use covar_evt::backtest::{quantile_score, uc_test_covar, uc_test_var};
use covar_evt::simulation::{mc_study, GenerativeModel, McStudyConfig, McSummary};
use covar_evt::tail::{hill, weissman_quantile};
use covar_evt::tdf::{TdfFamily, TdfModel};

const MASTER_SEED: u64 = 20260808;

/// Reference summary statistics for 100-replication studies at p = 0.05:
/// (full mean, full sd, true-γ mean, true-γ sd).
fn reference_table(family: TdfFamily) -> (f64, f64, f64, f64) {
    match family {
        TdfFamily::Logistic => (446.34, 127.92, 325.14, 29.44),
        TdfFamily::HuslerReiss => (463.40, 130.75, 350.26, 31.81),
        TdfFamily::Bilogistic => (460.94, 149.86, 352.88, 34.44),
        TdfFamily::AsymLogistic => (327.75, 83.40, 253.01, 26.58),
        TdfFamily::StudentT => (4.50, 0.55, 4.13, 0.46),
    }
}

fn reference_model(family: TdfFamily) -> TdfModel {
    McStudyConfig::preset(family).model.tdf().clone()
}

fn studies() -> &'static HashMap<&'static str, McSummary> {
    static STUDIES: OnceLock<HashMap<&'static str, McSummary>> = OnceLock::new();
    STUDIES.get_or_init(|| {
        let mut out = HashMap::new();
        for (name, family) in [
            ("logistic", TdfFamily::Logistic),
            ("hr", TdfFamily::HuslerReiss),
            ("bilogistic", TdfFamily::Bilogistic),
            ("asym-logistic", TdfFamily::AsymLogistic),
            ("t", TdfFamily::StudentT),
        ] {
            let mut config = McStudyConfig::preset(family);
            config.master_seed = MASTER_SEED;
            out.insert(name, mc_study(&config).expect("study runs"));
        }
        out
    })
}

#[test]
fn criterion_1_true_covar_oracle_values() {
    let start = Instant::now();
    let cases: [(TdfFamily, f64); 5] = [
        (TdfFamily::Logistic, 367.31),
        (TdfFamily::HuslerReiss, 399.48),
        (TdfFamily::Bilogistic, 341.52),
        (TdfFamily::AsymLogistic, 281.49),
        (TdfFamily::StudentT, 4.42),
    ];
    let mut lines = Vec::new();
    for (family, expected) in cases {
        let gen = GenerativeModel::new(reference_model(family));
        let got = true_covar_oracle(&gen, 0.05).unwrap();
        let rel = (got / expected - 1.0).abs();
        assert!(
            rel <= 5e-3,
            "{family:?}: oracle {got:.4} vs reference {expected} (rel {rel:.2e})"
        );
        lines.push(format!("{family:?} {got:.2}~{expected}"));
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "oracle runtime {elapsed:?} exceeds 1 minute");
    println!(
        "criterion 1 (oracle values ±0.5%, <1 min): PASS [{}] in {elapsed:?}",
        lines.join(", ")
    );
}

#[test]
fn criterion_2_full_estimator_means() {
    for (name, family) in [
        ("logistic", TdfFamily::Logistic),
        ("hr", TdfFamily::HuslerReiss),
        ("t", TdfFamily::StudentT),
    ] {
        let s = &studies()[name];
        let (ref_mean, ref_sd, _, _) = reference_table(family);
        let half_width = 3.0 * ref_sd / (100.0_f64).sqrt();
        let (lo, hi) = (ref_mean - half_width, ref_mean + half_width);
        let full = s.full.expect("full variant present");
        assert_eq!(s.failures, 0, "{name}: {} failed replications", s.failures);
        assert!(
            full.mean >= lo && full.mean <= hi,
            "{name}: full-estimator mean {:.3} outside [{lo:.3}, {hi:.3}]",
            full.mean
        );
        println!(
            "criterion 2 ({name} full mean in ±3·SD/√100 band): PASS {:.2} in [{:.2}, {:.2}]",
            full.mean, lo, hi
        );
    }
}

#[test]
fn criterion_3_held_fixed_variants() {
    // True-γ means for the gated models.
    for (name, family) in [
        ("logistic", TdfFamily::Logistic),
        ("asym-logistic", TdfFamily::AsymLogistic),
    ] {
        let s = &studies()[name];
        let (_, _, ref_mean, ref_sd) = reference_table(family);
        let half_width = 3.0 * ref_sd / 10.0;
        let tg = s.true_gamma_variant.expect("true-gamma variant present");
        assert!(
            (tg.mean - ref_mean).abs() <= half_width,
            "{name}: true-γ mean {:.3} outside {ref_mean} ± {half_width:.2}",
            tg.mean
        );
        println!(
            "criterion 3 ({name} true-γ mean): PASS {:.2} in {:.2} ± {:.2}",
            tg.mean, ref_mean, half_width
        );
    }
    // Freezing γ must collapse the dispersion for the heavy-variance models.
    for name in ["logistic", "hr", "bilogistic"] {
        let s = &studies()[name];
        let full = s.full.unwrap();
        let tg = s.true_gamma_variant.unwrap();
        let ratio = full.sd / tg.sd;
        assert!(
            ratio >= 3.0,
            "{name}: SD reduction {ratio:.2}x below 3x (full {:.2}, true-γ {:.2})",
            full.sd,
            tg.sd
        );
        println!("criterion 3 ({name} SD reduction ≥3x): PASS {ratio:.2}x");
    }
}

#[test]
fn criterion_4_adjustment_factor_limit() {
    // p/η*_p → R₂(1, 0) as p → 0 for the logistic reference model.
    let model = TdfModel::logistic(0.6).unwrap();
    let limit = model.eval_r_partial2(1.0, 0.0).unwrap();
    let p = 1e-5;
    let eta = solve_eta_star(&model, RiskLevel::symmetric(p).unwrap()).unwrap();
    let ratio = p / eta;
    let rel = (ratio / limit - 1.0).abs();
    assert!(rel <= 0.01, "p/η* = {ratio:.6} vs R₂(1,0) = {limit} (rel {rel:.2e})");
    println!("criterion 4 (p/η* → R₂(1,0) within 1% at p=1e-5): PASS ratio {ratio:.5}");
}

#[test]
fn criterion_5_coverage_test_arithmetic() {
    // Expected counts are exact arithmetic.
    let var_cell = uc_test_var(114, 5534, 0.02).unwrap();
    assert!((var_cell.expected - 110.68).abs() < 1e-9, "e_n = {}", var_cell.expected);
    let covar_cell = uc_test_covar(3, 114, 0.05).unwrap();
    assert!((covar_cell.expected - 5.7).abs() < 1e-12, "e_n^b = {}", covar_cell.expected);

    // Spot-checked p-values within ±0.02 absolute.
    let cells = [
        ("VaR 114/5534@2%", var_cell.p_value, 0.7511),
        ("CoVaR 1/116@5%", uc_test_covar(1, 116, 0.05).unwrap().p_value, 0.0121),
        ("CoVaR 1/113@5%", uc_test_covar(1, 113, 0.05).unwrap().p_value, 0.0140),
    ];
    for (label, got, expected) in cells {
        assert!(
            (got - expected).abs() <= 0.02,
            "{label}: p-value {got:.4} vs reference {expected}"
        );
    }
    println!(
        "criterion 5 (coverage arithmetic + p-values ±0.02): PASS e_n 110.68, e_n^b 5.7, p {:.4}/{:.4}/{:.4}",
        cells[0].1, cells[1].1, cells[2].1
    );
}

#[test]
fn criterion_6_property_suites() {
    let start = Instant::now();

    // Tail dependence bounds, homogeneity and monotonicity on 10^4 random
    // (model, x, y) triples with zero violations.
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED ^ 0xa6);
    let mut violations = 0usize;
    for _ in 0..10_000 {
        let model = random_model(&mut rng);
        let x = rng.random::<f64>() * 10.0;
        let y = rng.random::<f64>() * 10.0;
        let r = model.eval_r(x, y).unwrap();
        if !(r >= 0.0 && r <= x.min(y) + 1e-12) {
            violations += 1;
        }
        for t in [0.5, 2.0, 7.0] {
            let scaled = model.eval_r(t * x, t * y).unwrap();
            if (scaled - t * r).abs() > 1e-10 * t {
                violations += 1;
            }
        }
        let dx = rng.random::<f64>();
        let dy = rng.random::<f64>();
        if model.eval_r(x + dx, y).unwrap() < r - 1e-10
            || model.eval_r(x, y + dy).unwrap() < r - 1e-10
        {
            violations += 1;
        }
    }
    assert_eq!(violations, 0, "{violations} tail-dependence property violations");

    // M-estimator self-consistency at planted truth.
    for family in [
        TdfFamily::Logistic,
        TdfFamily::HuslerReiss,
        TdfFamily::Bilogistic,
        TdfFamily::AsymLogistic,
        TdfFamily::StudentT,
    ] {
        let model = reference_model(family);
        let g = TestFunctionSet::default_for(family);
        let planted = phi(&model, &g).unwrap();
        let fit = fit_tdf_to_moments(&planted, family, &g, model.params(), 100).unwrap();
        assert!(
            fit.objective_value < 1e-9,
            "{family:?}: planted objective {}",
            fit.objective_value
        );
    }

    // Hill and Weissman closed-form identities.
    let ys: Vec<f64> = (1..=40).map(|i| (i as f64).exp()).collect();
    for k in [1usize, 7, 20] {
        let g = hill(&ys, k).unwrap();
        assert!((g - (k as f64 + 1.0) / 2.0).abs() < 1e-9, "hill identity at k={k}");
    }
    let grid: Vec<f64> = (0..2000)
        .map(|i| ((i as f64 + 0.5) / 2000.0).powf(-0.25))
        .collect();
    let mut sorted = grid.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let v = weissman_quantile(&grid, 200, 0.77, 0.1).unwrap();
    assert!((v - sorted[200]).abs() < 1e-12, "weissman factor-1 identity");
    let v = weissman_quantile(&grid, 200, 0.0, 1e-4).unwrap();
    assert!((v - sorted[200]).abs() < 1e-12, "weissman zero-gamma identity");

    // Quantile-score branch values, exact.
    assert_eq!(quantile_score(2.0, 1.0, 0.05), 0.1);
    assert_eq!(quantile_score(2.0, 3.0, 0.05), (0.05 - 1.0) * 2.0 + 3.0);
    assert_eq!(quantile_score(2.0, 2.0, 0.05), 0.1);

    // Sampler margins against the unit Fréchet CDF: Kolmogorov-Smirnov
    // distance below the 1% critical value in at least 95% of runs.
    let mut passes = 0;
    let mut runs = 0;
    for family in [
        TdfFamily::Logistic,
        TdfFamily::HuslerReiss,
        TdfFamily::Bilogistic,
        TdfFamily::AsymLogistic,
    ] {
        let gen = GenerativeModel::new(reference_model(family));
        for seed in 0..5u64 {
            let s = gen.sample(10_000, MASTER_SEED ^ (seed + 1)).unwrap();
            for data in [s.xs(), s.ys()] {
                runs += 1;
                if ks_distance(data, frechet_cdf) < 1.628 / (10_000.0_f64).sqrt() {
                    passes += 1;
                }
            }
        }
    }
    assert!(
        passes * 100 >= runs * 95,
        "sampler margin KS: {passes}/{runs} below the 1% critical value"
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 300, "property suite took {elapsed:?} (limit 5 min)");
    println!(
        "criterion 6 (property suites, <5 min): PASS 10^4 triples clean, KS {passes}/{runs}, in {elapsed:?}"
    );
}

fn random_model(rng: &mut ChaCha8Rng) -> TdfModel {
    match rng.random_range(0..5) {
        0 => TdfModel::logistic(0.05 + 0.95 * rng.random::<f64>()).unwrap(),
        1 => TdfModel::husler_reiss(0.05 + 8.0 * rng.random::<f64>()).unwrap(),
        2 => TdfModel::bilogistic(
            0.05 + 0.9 * rng.random::<f64>(),
            0.05 + 0.9 * rng.random::<f64>(),
        )
        .unwrap(),
        3 => TdfModel::asym_logistic(
            0.05 + 0.95 * rng.random::<f64>(),
            rng.random::<f64>(),
            rng.random::<f64>(),
        )
        .unwrap(),
        _ => TdfModel::student_t(0.5 + 15.0 * rng.random::<f64>(), 0.05 + 0.9 * rng.random::<f64>())
            .unwrap(),
    }
}

fn ks_distance(data: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i as f64 + 1.0) / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn criterion_2_3_report_reference_deltas() {
    // Informational: print the full comparison table against the reference
    // summary statistics (means gated above; the rest for inspection).
    for (name, family) in [
        ("logistic", TdfFamily::Logistic),
        ("hr", TdfFamily::HuslerReiss),
        ("bilogistic", TdfFamily::Bilogistic),
        ("asym-logistic", TdfFamily::AsymLogistic),
        ("t", TdfFamily::StudentT),
    ] {
        let s = &studies()[name];
        let (fm, fsd, tm, tsd) = reference_table(family);
        let full = s.full.unwrap();
        let tg = s.true_gamma_variant.unwrap();
        println!(
            "{name}: true {:.2} | full {:.2}/{:.2} (ref {fm}/{fsd}) | true-γ {:.2}/{:.2} (ref {tm}/{tsd})",
            s.true_covar, full.mean, full.sd, tg.mean, tg.sd
        );
    }
}
