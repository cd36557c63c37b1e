//! Thin wrappers around the distribution functions used across the crate.

use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal, StudentsT};
use statrs::function::erf::erfc;

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal survival function, accurate in the far upper tail.
pub fn norm_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Student-t CDF with `nu` degrees of freedom (any real `nu > 0`).
pub fn t_cdf(x: f64, nu: f64) -> f64 {
    StudentsT::new(0.0, 1.0, nu)
        .expect("validated degrees of freedom")
        .cdf(x)
}

/// Student-t density with `nu` degrees of freedom.
pub fn t_pdf(x: f64, nu: f64) -> f64 {
    StudentsT::new(0.0, 1.0, nu)
        .expect("validated degrees of freedom")
        .pdf(x)
}

/// Student-t quantile with `nu` degrees of freedom.
pub fn t_quantile(p: f64, nu: f64) -> f64 {
    StudentsT::new(0.0, 1.0, nu)
        .expect("validated degrees of freedom")
        .inverse_cdf(p)
}

/// Chi-square survival function (upper tail probability).
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(df).expect("validated df").cdf(x)
}

/// Unit Fréchet CDF `exp(-1/x)` for `x > 0`.
pub fn frechet_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// Unit Fréchet quantile: `F(x) = u` solved as `x = -1/log(u)`.
pub fn frechet_quantile(u: f64) -> f64 {
    -1.0 / u.ln()
}
