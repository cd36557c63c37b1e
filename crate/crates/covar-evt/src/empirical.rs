//! Rank-based nonparametric estimation of the tail dependence function.

use crate::error::{Error, Result};

/// A paired sample of institution and system losses (or residuals).
#[derive(Debug, Clone, PartialEq)]
pub struct LossPairSample {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl LossPairSample {
    /// Build a sample, requiring equal lengths, `n ≥ 2` and finite values.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Domain(format!(
                "paired sample lengths differ: {} vs {}",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::Domain("paired sample needs n ≥ 2".into()));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("paired sample contains non-finite values".into()));
        }
        Ok(LossPairSample { xs, ys })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        false // n ≥ 2 by construction
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }
}

/// Componentwise ranks of a paired sample, each a permutation of `1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankVectors {
    pub rx: Vec<usize>,
    pub ry: Vec<usize>,
}

/// Ascending ranks with ties broken by original index order, so that the
/// first occurrence of a tied value receives the smaller rank. Continuous
/// data tie with probability zero; the deterministic rule keeps runs on
/// discretized data reproducible.
fn ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut out = vec![0usize; values.len()];
    for (rank0, &idx) in order.iter().enumerate() {
        out[idx] = rank0 + 1;
    }
    out
}

/// Ranks of both components of the sample.
pub fn compute_ranks(sample: &LossPairSample) -> RankVectors {
    RankVectors {
        rx: ranks(sample.xs()),
        ry: ranks(sample.ys()),
    }
}

/// Nonparametric tail dependence estimator
/// `R̂(x,y) = (1/m)·#{i : Rᵢˣ ≥ n + 1/2 − mx, Rᵢʸ ≥ n + 1/2 − my}`
/// for an intermediate threshold count `1 ≤ m ≤ n`.
///
/// The comparison is exact half-integer arithmetic; no tolerance is applied.
pub fn r_hat(sample: &LossPairSample, m: usize, x: f64, y: f64) -> Result<f64> {
    let ranks = compute_ranks(sample);
    r_hat_from_ranks(&ranks, sample.len(), m, x, y)
}

/// `r_hat` on precomputed ranks; avoids re-ranking in grid evaluations.
pub fn r_hat_from_ranks(
    ranks: &RankVectors,
    n: usize,
    m: usize,
    x: f64,
    y: f64,
) -> Result<f64> {
    check_m(m, n)?;
    if !(x >= 0.0 && y >= 0.0) {
        return Err(Error::Domain(format!("r_hat requires x, y ≥ 0, got ({x}, {y})")));
    }
    let tx = n as f64 + 0.5 - m as f64 * x;
    let ty = n as f64 + 0.5 - m as f64 * y;
    let count = ranks
        .rx
        .iter()
        .zip(&ranks.ry)
        .filter(|&(&rx, &ry)| rx as f64 >= tx && ry as f64 >= ty)
        .count();
    Ok(count as f64 / m as f64)
}

/// Empirical upper tail dependence coefficient `R̂(1, 1)`.
pub fn tdc_hat(sample: &LossPairSample, m: usize) -> Result<f64> {
    r_hat(sample, m, 1.0, 1.0)
}

pub(crate) fn check_m(m: usize, n: usize) -> Result<()> {
    if m == 0 || m > n {
        return Err(Error::Domain(format!(
            "threshold count m = {m} must satisfy 1 ≤ m ≤ n = {n}"
        )));
    }
    Ok(())
}
