//! `ralmkit` command-line front end.
//!
//! Exit codes: 0 success (solve converged, certificates computed, gradcheck
//! within tolerance), 2 solve hit its outer iteration cap, 1 anything else.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use ralmkit::bench::{derivative_check, load_csv, read_log};
use ralmkit::certify::{
    critical_cone_basis, fit_linear_rate, genhess_min_eig, mssosc_on_basis, Verdict, CERT_TOL,
};
use ralmkit::geometry::ManifoldPoint;
use ralmkit::lagrangian::kkt_residual;
use ralmkit::ralm::{ralm_solve, RalmStatus};
use ralmkit::Error;

use config::{Built, RunConfig};

#[derive(Parser)]
#[command(
    name = "ralmkit",
    version,
    about = "Riemannian augmented Lagrangian solver and certificates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the augmented Lagrangian method and write the iterate log.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Iterate log path (overrides `output.log`).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Stationarity and second-order certificates at a given pair.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        point: PathBuf,
        #[arg(long)]
        multiplier: PathBuf,
    },
    /// Fit a linear rate to the KKT residual column of a log.
    Rate {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = ralmkit::certify::DEFAULT_TAIL_FRACTION)]
        tail: f64,
    },
    /// Finite-difference check of the augmented Lagrangian derivatives.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        samples: usize,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

type CliResult<T> = std::result::Result<T, String>;

fn lib(e: Error) -> String {
    e.to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RALMKIT_LOG_LEVEL", "error"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve { common, log } => solve(&common, log),
        Command::Certify {
            common,
            point,
            multiplier,
        } => certify(&common, &point, &multiplier),
        Command::Rate { log, tail } => rate(&log, tail),
        Command::Gradcheck { common, samples } => gradcheck(&common, samples),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn load(common: &Common) -> CliResult<(RunConfig, Built)> {
    let cfg = RunConfig::load(&common.config)?;
    let seed = common.seed.unwrap_or(cfg.output.seed);
    let built = cfg.build(seed)?;
    Ok((cfg, built))
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    println!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct SolveSummary {
    status: &'static str,
    outer_iterations: usize,
    kkt_residual: f64,
    rho: f64,
}

fn solve(common: &Common, log_override: Option<PathBuf>) -> CliResult<u8> {
    let (cfg, built) = load(common)?;
    let out = ralm_solve(&built.problem, &cfg.solver, &built.x0, &built.y0).map_err(lib)?;
    let last = out.records.last().expect("the start is always recorded");

    if let Some(path) = log_override.or_else(|| cfg.output.log.clone()) {
        output::write_log_atomic(&path, &out.records)?;
        info!("log written to {}", path.display());
    }
    if let Some(path) = &cfg.output.point {
        output::write_csv_atomic(path, out.point.ambient())?;
    }
    if let Some(path) = &cfg.output.multiplier {
        output::write_csv_atomic(path, &out.multiplier)?;
    }
    if let Some(path) = &cfg.output.plot {
        if let Err(e) = output::write_plot(path, &out.records) {
            warn!("plot not written: {e}");
        }
    }

    let (status, code) = match out.status {
        RalmStatus::Converged => ("converged", 0),
        RalmStatus::MaxIterations => ("max-iterations", 2),
    };
    print_json(&SolveSummary {
        status,
        outer_iterations: out.records.len() - 1,
        kkt_residual: last.kkt_residual,
        rho: last.rho,
    })?;
    Ok(code)
}

#[derive(Serialize)]
struct Verdicts {
    mssosc: Option<Verdict>,
    genhess: Option<Verdict>,
}

#[derive(Serialize)]
struct CertifyReport {
    stationarity_residual: f64,
    cone_dim: Option<usize>,
    mssosc_min_eig: Option<f64>,
    genhess_min_eig: Option<f64>,
    genhess_rho: f64,
    genhess_partial: Option<bool>,
    verdicts: Verdicts,
}

fn certify(common: &Common, point: &Path, multiplier: &Path) -> CliResult<u8> {
    let (cfg, built) = load(common)?;
    let p = &built.problem;
    let a = load_csv(point).map_err(lib)?;
    let x = Arc::new(
        ManifoldPoint::from_ambient(p.manifold, a)
            .map_err(|e| format!("point {}: {e}", point.display()))?,
    );
    let y = load_csv(multiplier).map_err(lib)?;
    let shape = p.multiplier_shape();
    if y.shape() != shape {
        return Err(format!(
            "multiplier {}: expected shape {shape:?}, found {:?}",
            multiplier.display(),
            y.shape()
        ));
    }

    let residual = kkt_residual(p, &x, &y).map_err(lib)?;
    let mut report = CertifyReport {
        stationarity_residual: residual,
        cone_dim: None,
        mssosc_min_eig: None,
        genhess_min_eig: None,
        genhess_rho: cfg.certify.rho,
        genhess_partial: None,
        verdicts: Verdicts {
            mssosc: None,
            genhess: None,
        },
    };
    match critical_cone_basis(p, &x, &y) {
        Ok(basis) => {
            let m = mssosc_on_basis(p, &x, &y, &basis, CERT_TOL).map_err(lib)?;
            report.cone_dim = Some(basis.dim());
            report.mssosc_min_eig = m.min_eigenvalue;
            report.verdicts.mssosc = Some(m.verdict);
            let g =
                genhess_min_eig(p, cfg.certify.rho, &x, &y, cfg.certify.enumerate).map_err(lib)?;
            report.genhess_min_eig = g.min_eigenvalue;
            report.genhess_partial = Some(g.partial);
            report.verdicts.genhess = Some(g.verdict);
        }
        Err(Error::NotStationary { residual }) => {
            warn!("pair is not stationary (residual {residual:e}); certificates skipped");
        }
        Err(e) => return Err(lib(e)),
    }
    print_json(&report)?;
    Ok(0)
}

#[derive(Serialize)]
struct RateReport {
    rate: f64,
    fit_quality: f64,
    tail_len: usize,
}

fn rate(log: &Path, tail: f64) -> CliResult<u8> {
    let records = read_log(log).map_err(lib)?;
    let residuals: Vec<f64> = records.iter().map(|r| r.kkt_residual).collect();
    let fit = fit_linear_rate(&residuals, tail).map_err(lib)?;
    print_json(&RateReport {
        rate: fit.rate,
        fit_quality: fit.fit_quality,
        tail_len: fit.tail_len,
    })?;
    Ok(0)
}

fn gradcheck(common: &Common, samples: usize) -> CliResult<u8> {
    let (cfg, built) = load(common)?;
    let seed = common.seed.unwrap_or(cfg.output.seed);
    let report = derivative_check(&built.problem, cfg.solver.rho0, samples, seed).map_err(lib)?;
    print_json(&report)?;
    Ok(if report.passed() { 0 } else { 1 })
}
