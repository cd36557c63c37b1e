//! Bracketed scalar root finding.
//!
//! Bisection is used throughout the crate: every equation we solve
//! (adjustment factors, copula inversion, crossing points) is monotone in
//! its unknown, and bisection converges unconditionally on a sign-changing
//! bracket regardless of derivative quality.

use crate::error::{Error, Result};

/// Solve `f(x) = 0` on `[lo, hi]` by bisection to absolute tolerance `tol`.
///
/// Requires `f(lo)` and `f(hi)` to have opposite signs (an exact zero at
/// either endpoint is returned immediately).
pub fn bisect<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let mut flo = f(lo);
    if flo == 0.0 {
        return Ok(lo);
    }
    let fhi = f(hi);
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.is_nan() || fhi.is_nan() {
        return Err(Error::Numeric {
            message: format!("bisection endpoints not finite: f({lo})={flo}, f({hi})={fhi}"),
            achieved: f64::INFINITY,
        });
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Domain(format!(
            "no sign change on bracket [{lo}, {hi}]: f(lo)={flo}, f(hi)={fhi}"
        )));
    }
    // 200 halvings are enough to exhaust f64 resolution on any finite bracket.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return Ok(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Expand `hi` geometrically until `f` changes sign relative to `f(lo)`,
/// then bisect. Used for root solves with an unknown upper bracket.
pub fn bisect_expanding<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi0: f64,
    max_hi: f64,
    tol: f64,
) -> Result<f64> {
    let flo = f(lo);
    let mut hi = hi0;
    let mut fhi = f(hi);
    let mut expansions = 0;
    while fhi.signum() == flo.signum() && hi < max_hi {
        hi = (hi * 2.0).min(max_hi);
        fhi = f(hi);
        expansions += 1;
        if expansions > 200 {
            break;
        }
    }
    if fhi.signum() == flo.signum() {
        return Err(Error::Domain(format!(
            "failed to bracket a root on [{lo}, {max_hi}]"
        )));
    }
    bisect(f, lo, hi, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_cube_root() {
        let r = bisect(|x| x * x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2.0_f64.powf(1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_unbracketed() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn endpoint_zero_returned() {
        let r = bisect(|x| x, 0.0, 1.0, 1e-12).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn expanding_bracket() {
        let r = bisect_expanding(|x| x - 37.0, 0.0, 1.0, 1e6, 1e-10).unwrap();
        assert!((r - 37.0).abs() < 1e-9);
    }
}
