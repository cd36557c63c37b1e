//! Implementations of the six pipelines.

use std::path::{Path, PathBuf};

use covar_evt::backtest::{
    comparative_backtest, quantile_score, uc_test_covar, uc_test_var, ScoreSeries,
};
use covar_evt::covar::{estimate_covar, EstimateConfig, RiskLevel};
use covar_evt::empirical::LossPairSample;
use covar_evt::garch::{
    fit_ar_garch, realized_residuals, rolling_forecast, FilterMode, RollingConfig,
};
use covar_evt::mestimator::{fit_tdf as lib_fit_tdf, TestFunctionSet};
use covar_evt::simulation::{mc_study, McStudyConfig};
use covar_evt::tail::{hill, var_sensitivity, weissman_quantile, SelectKConfig};
use covar_evt::tdf::{TdfFamily, TdfModel};

use crate::config::RunConfig;
use crate::ingest::{ingest, inner_join};
use crate::output::{fmt_f64, fmt_opt, Artifacts};
use crate::parse_mode;

fn parse_family(config: &mut RunConfig) -> Result<TdfFamily, String> {
    config
        .get("family")
        .ok_or_else(|| "missing required 'family'".to_string())?
        .parse::<TdfFamily>()
        .map_err(|e| e.to_string())
}

fn required<T: std::str::FromStr>(config: &RunConfig, key: &str) -> Result<T, String> {
    match config.get(key) {
        None => Err(format!("missing required '{key}'")),
        Some(raw) => raw
            .parse::<T>()
            .map_err(|_| format!("cannot parse '{key}' value '{raw}'")),
    }
}

fn load_pair(config: &mut RunConfig) -> Result<(Vec<String>, Vec<f64>, Vec<f64>), String> {
    let mode = parse_mode(config)?;
    let inst_path: String = required(config, "institution")?;
    let sys_path: String = required(config, "system")?;
    let inst = ingest(Path::new(&inst_path), mode).map_err(|e| e.to_string())?;
    let sys = ingest(Path::new(&sys_path), mode).map_err(|e| e.to_string())?;
    let (dates, xs, ys, dropped_a, dropped_b) = inner_join(&inst, &sys);
    if dropped_a > 0 || dropped_b > 0 {
        println!(
            "date join: dropped {dropped_a} institution rows and {dropped_b} system rows without a match"
        );
    }
    if dates.len() < 2 {
        return Err("fewer than two aligned observations after the date join".into());
    }
    config.record("aligned_days", dates.len());
    Ok((dates, xs, ys))
}

fn seed_of(config: &mut RunConfig) -> Result<u64, String> {
    config.parse_or("seed", 0u64)
}

// --- simulate -----------------------------------------------------------------

pub fn simulate(config: &mut RunConfig, artifacts: &mut Artifacts) -> Result<(), String> {
    let family = parse_family(config)?;
    let mut study = McStudyConfig::preset(family);
    study.master_seed = seed_of(config)?;
    if let Some(reps) = config.parse::<usize>("reps")? {
        study.reps = reps;
    }
    if let Some(n) = config.parse::<usize>("n")? {
        study.n = n;
    }
    if let Some(m) = config.parse::<usize>("m")? {
        study.m = m;
    }
    if let Some(p) = config.parse::<f64>("p")? {
        study.p = p;
    }
    config.record("reps", study.reps);
    config.record("n", study.n);
    config.record("m", study.m);
    config.record("p", study.p);
    config.record("model_params", format!("{:?}", study.model.tdf().params()));

    let summary = mc_study(&study).map_err(|e| e.to_string())?;

    let mut rows = vec![
        format!("truth,covar,{}", fmt_f64(summary.true_covar)),
        format!("truth,gamma,{}", fmt_f64(summary.true_gamma)),
        format!("truth,eta_star,{}", fmt_f64(summary.true_eta_star)),
        format!("truth,eta,{}", fmt_f64(summary.true_eta)),
        format!("run,failures,{}", summary.failures),
    ];
    for (variant, stats) in [
        ("full", summary.full),
        ("true_gamma", summary.true_gamma_variant),
        ("true_eta_star", summary.true_eta_star_variant),
        ("true_eta", summary.true_eta_variant),
    ] {
        if let Some(s) = stats {
            rows.push(format!("{variant},mean,{}", fmt_f64(s.mean)));
            rows.push(format!("{variant},median,{}", fmt_f64(s.median)));
            rows.push(format!("{variant},sd,{}", fmt_f64(s.sd)));
        }
    }
    let summary_path = artifacts.write_csv("summary.csv", config, "variant,statistic,value", &rows)?;

    let mut density = Vec::new();
    for rep in &summary.replications {
        for (name, value) in [
            ("gamma_hat", Some(rep.gamma_hat)),
            ("eta_star_hat", Some(rep.eta_star_hat)),
            ("var_hat", Some(rep.var_hat)),
            ("covar_full", rep.covar_full),
            ("covar_true_gamma", rep.covar_true_gamma),
            ("covar_true_eta_star", rep.covar_true_eta_star),
            ("covar_true_eta", rep.covar_true_eta),
        ] {
            if let Some(v) = value {
                density.push(format!("{},{name},{}", rep.rep, fmt_f64(v)));
            }
        }
    }
    let density_path =
        artifacts.write_csv("density.csv", config, "replication,quantity,value", &density)?;

    println!(
        "study {family:?}: true CoVaR {:.4}, full mean {} over {} replications ({} failures)",
        summary.true_covar,
        summary.full.map(|s| format!("{:.4}", s.mean)).unwrap_or_else(|| "-".into()),
        study.reps,
        summary.failures
    );
    println!("wrote {} and {}", summary_path.display(), density_path.display());
    Ok(())
}

// --- estimate / fit-tdf ---------------------------------------------------------

fn estimate_config(config: &mut RunConfig) -> Result<EstimateConfig, String> {
    let m: usize = required(config, "m")?;
    let mut est = EstimateConfig::new(m);
    est.k1 = config.parse::<usize>("k1")?;
    est.k2 = config.parse::<usize>("k2")?;
    est.k_bootstrap = SelectKConfig {
        seed: config.parse_or("seed", 0u64)?,
        ..SelectKConfig::default()
    };
    Ok(est)
}

pub fn estimate(config: &mut RunConfig, artifacts: &mut Artifacts) -> Result<(), String> {
    let family = parse_family(config)?;
    let (_, xs, ys) = load_pair(config)?;
    let p1 = config.parse_or("p1", 0.05)?;
    let p2 = config.parse_or("p2", 0.05)?;
    let levels = RiskLevel::new(p1, p2).map_err(|e| e.to_string())?;
    let est_config = estimate_config(config)?;
    let sample = LossPairSample::new(xs, ys).map_err(|e| e.to_string())?;
    let estimate = estimate_covar(&sample, family, levels, &est_config).map_err(|e| e.to_string())?;

    let payload = serde_json::to_value(&estimate).expect("serializable");
    let path = artifacts.write_json("covar_estimate.json", config, payload)?;
    println!(
        "CoVaR({p1},{p2}) = {:.6} [gamma {:.4}, eta* {:.5}, VaR_p2 {:.6}, k1 {}, k2 {}, m {}]",
        estimate.value,
        estimate.gamma_hat,
        estimate.eta_star_hat,
        estimate.var_component,
        estimate.k1,
        estimate.k2,
        estimate.m
    );
    println!("wrote {}", path.display());
    Ok(())
}

pub fn fit_tdf(config: &mut RunConfig, artifacts: &mut Artifacts) -> Result<(), String> {
    let family = parse_family(config)?;
    let (_, xs, ys) = load_pair(config)?;
    let m: usize = required(config, "m")?;
    let sample = LossPairSample::new(xs, ys).map_err(|e| e.to_string())?;
    let g = TestFunctionSet::default_for(family);
    let fit = lib_fit_tdf(&sample, m, family, &g, None).map_err(|e| e.to_string())?;
    let payload = serde_json::to_value(&fit).expect("serializable");
    let path = artifacts.write_json("tdf_fit.json", config, payload)?;
    println!(
        "{family:?} fit: theta {:?}, objective {:.3e}, boundary {}",
        fit.theta_hat, fit.objective_value, fit.boundary
    );
    println!("wrote {}", path.display());
    Ok(())
}

// --- forecast --------------------------------------------------------------------

pub fn forecast(config: &mut RunConfig, artifacts: &mut Artifacts) -> Result<(), String> {
    let family = parse_family(config)?;
    let (dates, xs, ys) = load_pair(config)?;
    let p1 = config.parse_or("p1", 0.02)?;
    let p2 = config.parse_or("p2", 0.05)?;
    let levels = RiskLevel::new(p1, p2).map_err(|e| e.to_string())?;
    let window = config.parse_or("window", 3000usize)?;
    let stride = config.parse_or("stride", 50usize)?;
    let filter = match config.parse_or("filter", "garch".to_string())?.as_str() {
        "garch" => FilterMode::ArGarchSkewT,
        "identity" => FilterMode::Identity,
        other => return Err(format!("unknown filter '{other}' (expected garch|identity)")),
    };
    let covar = estimate_config(config)?;
    let rolling = RollingConfig {
        window,
        refit_stride: stride,
        levels,
        family,
        covar,
        filter,
    };
    let rows = rolling_forecast(&xs, &ys, &rolling).map_err(|e| e.to_string())?;

    let csv_rows: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                dates[r.t],
                fmt_opt(r.var_i),
                fmt_opt(r.covar_s_given_i),
                fmt_f64(r.realized_x_i),
                fmt_f64(r.realized_x_s),
                r.refit_id
            )
        })
        .collect();
    let path = artifacts.write_csv(
        "forecasts.csv",
        config,
        "date,var_i,covar_s_given_i,realized_x_i,realized_x_s,refit_id",
        &csv_rows,
    )?;
    let valid = rows.iter().filter(|r| r.var_i.is_some()).count();
    println!(
        "forecast: {} days ({} valid), window {window}, stride {stride}",
        rows.len(),
        valid
    );
    println!("wrote {}", path.display());
    Ok(())
}

// --- backtest ---------------------------------------------------------------------

fn parse_families(config: &RunConfig) -> Result<Vec<TdfFamily>, String> {
    match config.get("families") {
        None => Ok(vec![
            TdfFamily::Logistic,
            TdfFamily::HuslerReiss,
            TdfFamily::Bilogistic,
            TdfFamily::AsymLogistic,
            TdfFamily::StudentT,
        ]),
        Some(raw) => raw
            .split(',')
            .map(|tok| tok.trim().parse::<TdfFamily>().map_err(|e| e.to_string()))
            .collect(),
    }
}

pub fn backtest(config: &mut RunConfig, artifacts: &mut Artifacts) -> Result<(), String> {
    if config.get("forecasts").is_some() {
        return backtest_forecast_table(config, artifacts);
    }
    backtest_in_sample(config, artifacts)
}

/// In-sample backtest: filter the full sample once, estimate residual-level
/// VaR/CoVaR per family, reconstruct daily levels and test calibration.
fn backtest_in_sample(config: &mut RunConfig, artifacts: &mut Artifacts) -> Result<(), String> {
    let families = parse_families(config)?;
    let (_, xs, ys) = load_pair(config)?;
    let p1 = config.parse_or("p1", 0.02)?;
    let p2 = config.parse_or("p2", 0.05)?;
    let level = config.parse_or("level", 0.10)?;
    let levels = RiskLevel::new(p1, p2).map_err(|e| e.to_string())?;
    let est_config = estimate_config(config)?;

    let fit_i = fit_ar_garch(&xs).map_err(|e| format!("institution filter: {e}"))?;
    let fit_s = fit_ar_garch(&ys).map_err(|e| format!("system filter: {e}"))?;
    let z_i = realized_residuals(&xs, &fit_i).map_err(|e| e.to_string())?;
    let z_s = realized_residuals(&ys, &fit_s).map_err(|e| e.to_string())?;
    let n = z_i.len();

    // Institution VaR at level p1 from its residuals.
    let k1_i = match est_config.k1 {
        Some(k) => k,
        None => covar_evt::tail::select_k_bootstrap(&z_i, &est_config.k_bootstrap)
            .map_err(|e| e.to_string())?
            .k,
    };
    let gamma_i = hill(&z_i, k1_i).map_err(|e| e.to_string())?;
    let var_z_i = weissman_quantile(&z_i, k1_i, gamma_i, p1).map_err(|e| e.to_string())?;
    let var_daily: Vec<f64> = fit_i
        .cond_mean
        .iter()
        .zip(&fit_i.cond_vol)
        .map(|(mu, sd)| mu + sd * var_z_i)
        .collect();
    let violation_days: Vec<usize> = (0..n).filter(|&t| xs[t] > var_daily[t]).collect();
    let e_n = violation_days.len();
    let var_coverage = uc_test_var(e_n, n, p1).map_err(|e| e.to_string())?;

    let sample = LossPairSample::new(z_i.clone(), z_s.clone()).map_err(|e| e.to_string())?;
    let mut family_reports = Vec::new();
    let mut family_scores: Vec<(TdfFamily, ScoreSeries)> = Vec::new();
    for family in &families {
        let est = estimate_covar(&sample, *family, levels, &est_config).map_err(|e| e.to_string())?;
        let covar_daily: Vec<f64> = fit_s
            .cond_mean
            .iter()
            .zip(&fit_s.cond_vol)
            .map(|(mu, sd)| mu + sd * est.value)
            .collect();
        let joint = violation_days
            .iter()
            .filter(|&&t| ys[t] > covar_daily[t])
            .count();
        let coverage = uc_test_covar(joint, e_n, p2).map_err(|e| e.to_string())?;
        let scores = ScoreSeries::new(
            violation_days
                .iter()
                .map(|&t| quantile_score(covar_daily[t], ys[t], p2))
                .collect(),
        )
        .map_err(|e| e.to_string())?;
        family_reports.push(serde_json::json!({
            "family": format!("{family:?}"),
            "residual_covar": est.value,
            "eta_star_hat": est.eta_star_hat,
            "gamma_hat": est.gamma_hat,
            "joint_exceedances": joint,
            "expected": coverage.expected,
            "statistic": coverage.statistic,
            "p_value": coverage.p_value,
            "avg_score": scores.mean(),
        }));
        family_scores.push((*family, scores));
    }

    // Pairwise traffic-light comparisons on the aligned violation days.
    let mut matrix = Vec::new();
    for (fa, sa) in &family_scores {
        for (fb, sb) in &family_scores {
            if fa == fb {
                continue;
            }
            let cmp = comparative_backtest(sa, sb, level).map_err(|e| e.to_string())?;
            matrix.push(serde_json::json!({
                "reference": format!("{fa:?}"),
                "against": format!("{fb:?}"),
                "decision": format!("{:?}", cmp.decision),
                "statistic": cmp.statistic,
            }));
        }
    }

    let payload = serde_json::json!({
        "days": n,
        "var": {
            "residual_var": var_z_i,
            "gamma_hat": gamma_i,
            "k1": k1_i,
            "exceedances": e_n,
            "expected": var_coverage.expected,
            "statistic": var_coverage.statistic,
            "p_value": var_coverage.p_value,
        },
        "families": family_reports,
        "comparisons": matrix,
    });
    let path = artifacts.write_json("backtest.json", config, payload)?;
    println!(
        "in-sample backtest over {n} days: VaR exceedances {e_n} (expected {:.2}, p {:.4})",
        var_coverage.expected, var_coverage.p_value
    );
    for report in &family_reports {
        println!(
            "  {}: joint {} vs {:.2} expected, p {:.4}, avg score {:.5}",
            report["family"].as_str().unwrap_or("?"),
            report["joint_exceedances"],
            report["expected"].as_f64().unwrap_or(f64::NAN),
            report["p_value"].as_f64().unwrap_or(f64::NAN),
            report["avg_score"].as_f64().unwrap_or(f64::NAN),
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

/// Backtest a previously written forecast table.
fn backtest_forecast_table(config: &mut RunConfig, artifacts: &mut Artifacts) -> Result<(), String> {
    let path: String = required(config, "forecasts")?;
    let p1 = config.parse_or("p1", 0.02)?;
    let p2 = config.parse_or("p2", 0.05)?;
    let raw = std::fs::read_to_string(PathBuf::from(&path))
        .map_err(|e| format!("{path}: cannot read forecasts: {e}"))?;
    let mut days = 0usize;
    let mut var_hits = 0usize;
    let mut joint_hits = 0usize;
    let mut scores = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with("date,") {
            continue;
        }
        let cols: Vec<&str> = trimmed.split(',').collect();
        if cols.len() != 6 {
            return Err(format!("{path}:{}: expected 6 columns", idx + 1));
        }
        if cols[1].is_empty() || cols[2].is_empty() {
            continue; // invalidated forecast day
        }
        let parse = |s: &str, what: &str| -> Result<f64, String> {
            s.parse::<f64>()
                .map_err(|_| format!("{path}:{}: cannot parse {what} '{s}'", idx + 1))
        };
        let var_i = parse(cols[1], "var_i")?;
        let covar = parse(cols[2], "covar")?;
        let x_i = parse(cols[3], "realized_x_i")?;
        let x_s = parse(cols[4], "realized_x_s")?;
        days += 1;
        if x_i > var_i {
            var_hits += 1;
            scores.push(quantile_score(covar, x_s, p2));
            if x_s > covar {
                joint_hits += 1;
            }
        }
    }
    if days == 0 {
        return Err("forecast table holds no valid rows".into());
    }
    let var_coverage = uc_test_var(var_hits, days, p1).map_err(|e| e.to_string())?;
    let covar_coverage = uc_test_covar(joint_hits, var_hits, p2).map_err(|e| e.to_string())?;
    let score_series = ScoreSeries::new(scores).map_err(|e| e.to_string())?;
    let payload = serde_json::json!({
        "days": days,
        "var": {
            "exceedances": var_hits,
            "expected": var_coverage.expected,
            "p_value": var_coverage.p_value,
        },
        "covar": {
            "joint_exceedances": joint_hits,
            "expected": covar_coverage.expected,
            "p_value": covar_coverage.p_value,
            "avg_score": score_series.mean(),
        },
    });
    let out = artifacts.write_json("backtest.json", config, payload)?;
    println!(
        "forecast backtest: {days} days, VaR hits {var_hits} (p {:.4}), joint {joint_hits} (p {:.4})",
        var_coverage.p_value, covar_coverage.p_value
    );
    println!("wrote {}", out.display());
    Ok(())
}

// --- curves -----------------------------------------------------------------------

fn parse_params(config: &RunConfig) -> Result<Vec<f64>, String> {
    config
        .get("params")
        .ok_or_else(|| "missing required 'params'".to_string())?
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| format!("cannot parse parameter '{tok}'"))
        })
        .collect()
}

pub fn curves(config: &mut RunConfig, artifacts: &mut Artifacts) -> Result<(), String> {
    let kind = config.parse_or("kind", "eta".to_string())?;
    match kind.as_str() {
        "eta" => {
            let family = parse_family(config)?;
            let params = parse_params(config)?;
            let model = TdfModel::new(family, &params).map_err(|e| e.to_string())?;
            let points = config.parse_or("points", 101usize)?;
            if points < 2 {
                return Err("need at least two grid points".into());
            }
            let grid: Vec<f64> = (0..points)
                .map(|i| i as f64 / (points - 1) as f64)
                .collect();
            let curve = model.r_one_eta_curve(&grid).map_err(|e| e.to_string())?;
            let rows: Vec<String> = curve
                .iter()
                .map(|(eta, r)| format!("{},{}", fmt_f64(*eta), fmt_f64(*r)))
                .collect();
            let path = artifacts.write_csv("r_one_eta.csv", config, "eta,r", &rows)?;
            println!("wrote {} ({} points)", path.display(), rows.len());
        }
        "var-k" | "hill" => {
            let mode = parse_mode(config)?;
            let series_path: String = required(config, "series")?;
            let series = ingest(Path::new(&series_path), mode).map_err(|e| e.to_string())?;
            let n = series.losses.len();
            let kmin = config.parse_or("kmin", 10usize)?;
            let kmax = config.parse_or("kmax", (n / 2).max(kmin + 1))?;
            if kmin == 0 || kmax >= n || kmin > kmax {
                return Err(format!("invalid k range [{kmin}, {kmax}] for n = {n}"));
            }
            let rows: Vec<String> = if kind == "hill" {
                (kmin..=kmax)
                    .map(|k| {
                        hill(&series.losses, k)
                            .map(|g| format!("{k},{}", fmt_f64(g)))
                            .map_err(|e| e.to_string())
                    })
                    .collect::<Result<_, _>>()?
            } else {
                let gamma = required(config, "gamma")?;
                let p = config.parse_or("p", 0.01)?;
                var_sensitivity(&series.losses, gamma, p, kmin..=kmax)
                    .map_err(|e| e.to_string())?
                    .into_iter()
                    .map(|(k, v)| format!("{k},{}", fmt_f64(v)))
                    .collect()
            };
            let name = if kind == "hill" { "hill_plot.csv" } else { "var_sensitivity.csv" };
            let path = artifacts.write_csv(name, config, "k,estimate", &rows)?;
            println!("wrote {} ({} rows)", path.display(), rows.len());
        }
        other => return Err(format!("unknown curve kind '{other}' (expected eta|var-k|hill)")),
    }
    Ok(())
}
