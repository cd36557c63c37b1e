//! Command-line pipelines for CoVaR estimation: simulation studies, static
//! estimation, tail dependence fitting, rolling forecasts, backtests and
//! plot-data curves.

mod commands;
mod config;
mod ingest;
mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::ingest::SeriesMode;
use crate::output::Artifacts;

#[derive(Parser)]
#[command(
    name = "covar-evt",
    about = "Systemic-risk CoVaR estimation from heavy-tailed loss pairs",
    version
)]
struct Cli {
    /// Flat key=value configuration file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for anything randomized.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo study for one dependence family and write its
    /// summary and per-replication density data.
    Simulate {
        /// logistic | hr | bilogistic | alog | t
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
    },
    /// Estimate CoVaR of the system conditional on the institution from a
    /// pair of (date,value) CSV files.
    Estimate {
        #[arg(long)]
        institution: Option<PathBuf>,
        #[arg(long)]
        system: Option<PathBuf>,
        /// prices | losses
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        family: Option<String>,
        /// Threshold count for the dependence fit (required; choose by
        /// sensitivity analysis on real data).
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        k1: Option<usize>,
        #[arg(long)]
        k2: Option<usize>,
        #[arg(long)]
        p1: Option<f64>,
        #[arg(long)]
        p2: Option<f64>,
    },
    /// Fit a tail dependence family to the paired data and write the fit.
    FitTdf {
        #[arg(long)]
        institution: Option<PathBuf>,
        #[arg(long)]
        system: Option<PathBuf>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        m: Option<usize>,
    },
    /// Rolling out-of-sample VaR/CoVaR forecasts with AR-GARCH filtering.
    Forecast {
        #[arg(long)]
        institution: Option<PathBuf>,
        #[arg(long)]
        system: Option<PathBuf>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        k1: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        p1: Option<f64>,
        #[arg(long)]
        p2: Option<f64>,
        /// garch | identity
        #[arg(long)]
        filter: Option<String>,
    },
    /// Backtest CoVaR models: in-sample on a CSV pair, or on a previously
    /// written forecast table.
    Backtest {
        #[arg(long)]
        institution: Option<PathBuf>,
        #[arg(long)]
        system: Option<PathBuf>,
        #[arg(long)]
        mode: Option<String>,
        /// Comma-separated families (default: all five).
        #[arg(long)]
        families: Option<String>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        k1: Option<usize>,
        #[arg(long)]
        k2: Option<usize>,
        #[arg(long)]
        p1: Option<f64>,
        #[arg(long)]
        p2: Option<f64>,
        /// Backtest a forecast table instead of running in-sample.
        #[arg(long)]
        forecasts: Option<PathBuf>,
        /// Comparative-test level for the traffic-light matrix.
        #[arg(long)]
        level: Option<f64>,
    },
    /// Emit plot data: R(1,η) curves, VaR-vs-k sensitivity or Hill plots.
    Curves {
        /// eta | var-k | hill
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        family: Option<String>,
        /// Comma-separated family parameters, e.g. 0.6 or 0.4,0.7
        #[arg(long)]
        params: Option<String>,
        #[arg(long)]
        points: Option<usize>,
        /// Series file for var-k / hill curves.
        #[arg(long)]
        series: Option<PathBuf>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        kmin: Option<usize>,
        #[arg(long)]
        kmax: Option<usize>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let mut config = match &cli.config {
        Some(path) => match RunConfig::from_file(path) {
            Ok(c) => c,
            Err(e) => fail("config", &e, None),
        },
        None => RunConfig::default(),
    };
    config.set_override("seed", cli.seed);
    let mut artifacts = match Artifacts::new(&cli.out) {
        Ok(a) => a,
        Err(e) => fail("output", &e, None),
    };

    let command_name = match &cli.command {
        Command::Simulate { .. } => "simulate",
        Command::Estimate { .. } => "estimate",
        Command::FitTdf { .. } => "fit-tdf",
        Command::Forecast { .. } => "forecast",
        Command::Backtest { .. } => "backtest",
        Command::Curves { .. } => "curves",
    };

    if let Err(e) = dispatch(cli.command, &mut config, &mut artifacts) {
        artifacts.cleanup();
        fail(command_name, &e, Some(&config));
    }
}

fn dispatch(
    command: Command,
    config: &mut RunConfig,
    artifacts: &mut Artifacts,
) -> Result<(), String> {
    match command {
        Command::Simulate { family, reps, n, m, p } => {
            config.set_override("family", family);
            config.set_override("reps", reps);
            config.set_override("n", n);
            config.set_override("m", m);
            config.set_override("p", p);
            commands::simulate(config, artifacts)
        }
        Command::Estimate {
            institution,
            system,
            mode,
            family,
            m,
            k1,
            k2,
            p1,
            p2,
        } => {
            config.set_override("institution", institution.map(display_path));
            config.set_override("system", system.map(display_path));
            config.set_override("mode", mode);
            config.set_override("family", family);
            config.set_override("m", m);
            config.set_override("k1", k1);
            config.set_override("k2", k2);
            config.set_override("p1", p1);
            config.set_override("p2", p2);
            commands::estimate(config, artifacts)
        }
        Command::FitTdf {
            institution,
            system,
            mode,
            family,
            m,
        } => {
            config.set_override("institution", institution.map(display_path));
            config.set_override("system", system.map(display_path));
            config.set_override("mode", mode);
            config.set_override("family", family);
            config.set_override("m", m);
            commands::fit_tdf(config, artifacts)
        }
        Command::Forecast {
            institution,
            system,
            mode,
            family,
            m,
            k1,
            window,
            stride,
            p1,
            p2,
            filter,
        } => {
            config.set_override("institution", institution.map(display_path));
            config.set_override("system", system.map(display_path));
            config.set_override("mode", mode);
            config.set_override("family", family);
            config.set_override("m", m);
            config.set_override("k1", k1);
            config.set_override("window", window);
            config.set_override("stride", stride);
            config.set_override("p1", p1);
            config.set_override("p2", p2);
            config.set_override("filter", filter);
            commands::forecast(config, artifacts)
        }
        Command::Backtest {
            institution,
            system,
            mode,
            families,
            m,
            k1,
            k2,
            p1,
            p2,
            forecasts,
            level,
        } => {
            config.set_override("institution", institution.map(display_path));
            config.set_override("system", system.map(display_path));
            config.set_override("mode", mode);
            config.set_override("families", families);
            config.set_override("m", m);
            config.set_override("k1", k1);
            config.set_override("k2", k2);
            config.set_override("p1", p1);
            config.set_override("p2", p2);
            config.set_override("forecasts", forecasts.map(display_path));
            config.set_override("level", level);
            commands::backtest(config, artifacts)
        }
        Command::Curves {
            kind,
            family,
            params,
            points,
            series,
            mode,
            gamma,
            p,
            kmin,
            kmax,
        } => {
            config.set_override("kind", kind);
            config.set_override("family", family);
            config.set_override("params", params);
            config.set_override("points", points);
            config.set_override("series", series.map(display_path));
            config.set_override("mode", mode);
            config.set_override("gamma", gamma);
            config.set_override("p", p);
            config.set_override("kmin", kmin);
            config.set_override("kmax", kmax);
            commands::curves(config, artifacts)
        }
    }
}

fn display_path(p: PathBuf) -> String {
    p.display().to_string()
}

fn fail(command: &str, message: &str, config: Option<&RunConfig>) -> ! {
    let payload = serde_json::json!({
        "error": message,
        "command": command,
        "config": config.map(|c| c.echo_map().clone()),
    });
    eprintln!("{}", serde_json::to_string(&payload).expect("serializable"));
    std::process::exit(1);
}

/// Parse the shared series-interpretation flag.
pub(crate) fn parse_mode(config: &mut RunConfig) -> Result<SeriesMode, String> {
    let raw = config.parse_or("mode", "prices".to_string())?;
    raw.parse::<SeriesMode>()
}
