//! Semi-parametric CoVaR estimation for heavy-tailed loss pairs.
//!
//! CoVaR measures systemic risk as a high quantile of one loss variable
//! (a market or system proxy) conditional on another (an institution)
//! exceeding its own Value-at-Risk. This crate estimates it by
//!
//! 1. fitting a parametric upper tail dependence function to rank-based
//!    joint tail counts ([`tdf`], [`empirical`], [`mestimator`]),
//! 2. solving for an adjustment factor that converts the conditional
//!    quantile level into an unconditional one ([`covar`]), and
//! 3. extrapolating the unconditional quantile with the Hill tail index
//!    and the Weissman estimator ([`tail`]).
//!
//! [`simulation`] provides exact samplers and true-value oracles for the
//! five supported dependence models together with a Monte Carlo study
//! harness; [`garch`] adds the two-stage AR(1)-GARCH(1,1) filtering used
//! for dynamic forecasts on serially dependent data; [`backtest`] holds
//! coverage tests, quantile scores and comparative backtests.

pub mod backtest;
pub mod covar;
pub mod empirical;
pub mod error;
pub mod garch;
pub mod math;
pub mod mestimator;
pub mod simulation;
pub mod tail;
pub mod tdf;

pub use error::{Error, Result};
