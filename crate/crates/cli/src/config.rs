//! JSON run configuration.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "problem": { "cm": { "n": 4, "r": 2, "mu": 0.8, "len": 2.0 } },
//!   "start": { "point": "x0.csv", "multiplier": "y0.csv" },
//!   "solver": { "kkt_tol": 1e-10, "newton": { "max_iter": 100 } },
//!   "output": { "log": "run.csv", "plot": "run.svg", "seed": 0 },
//!   "certify": { "rho": 100.0, "enumerate": true }
//! }
//! ```
//!
//! Relative paths are taken relative to the directory holding the config.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use ralmkit::bench::{
    load_csv, load_dense, load_matrix_market, CmInstance, DenseFormat, RmcGenerator, RmcInstance,
};
use ralmkit::geometry::ManifoldPoint;
use ralmkit::lagrangian::ProblemSpec;
use ralmkit::ralm::RalmConfig;
use ralmkit::Mat;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub problem: ProblemBlock,
    #[serde(default)]
    pub start: StartBlock,
    #[serde(default)]
    pub solver: RalmConfig,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub certify: CertifyBlock,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum ProblemBlock {
    Cm(CmBlock),
    Rmc(RmcBlock),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmBlock {
    pub n: usize,
    pub r: usize,
    pub mu: f64,
    pub len: f64,
}

/// Exactly one data source: dense `observed` (+ optional `mask`, default
/// all observed), a Matrix Market `matrix_market` file, or a `generator`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmcBlock {
    pub r: usize,
    #[serde(default = "unit_weight")]
    pub mu: f64,
    pub observed: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub matrix_market: Option<PathBuf>,
    pub generator: Option<RmcGenerator>,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartBlock {
    pub point: Option<PathBuf>,
    pub multiplier: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub log: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub point: Option<PathBuf>,
    pub multiplier: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyBlock {
    /// Penalty for the generalized Hessian certificate.
    pub rho: f64,
    pub enumerate: bool,
}

impl Default for CertifyBlock {
    fn default() -> Self {
        CertifyBlock {
            rho: 100.0,
            enumerate: true,
        }
    }
}

pub struct Built {
    pub problem: ProblemSpec,
    pub x0: Arc<ManifoldPoint>,
    pub y0: Mat,
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn must_exist(field: &str, p: &Option<PathBuf>) -> Result<(), String> {
    match p {
        Some(path) if !path.is_file() => Err(format!("{field}: file {} not found", path.display())),
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text =
            std::fs::read_to_string(path).map_err(|e| format!("config {}: {e}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "schema_version: expected {SCHEMA_VERSION}, found {}",
                cfg.schema_version
            ));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        if let ProblemBlock::Rmc(b) = &mut cfg.problem {
            rebase(base, &mut b.observed);
            rebase(base, &mut b.mask);
            rebase(base, &mut b.matrix_market);
            must_exist("problem.rmc.observed", &b.observed)?;
            must_exist("problem.rmc.mask", &b.mask)?;
            must_exist("problem.rmc.matrix_market", &b.matrix_market)?;
            let sources = b.observed.is_some() as u8
                + b.matrix_market.is_some() as u8
                + b.generator.is_some() as u8;
            if sources != 1 {
                return Err(
                    "problem.rmc: give exactly one of observed, matrix_market, generator".into(),
                );
            }
            if b.mask.is_some() && b.observed.is_none() {
                return Err("problem.rmc.mask: only valid together with observed".into());
            }
        }
        rebase(base, &mut cfg.start.point);
        rebase(base, &mut cfg.start.multiplier);
        must_exist("start.point", &cfg.start.point)?;
        must_exist("start.multiplier", &cfg.start.multiplier)?;
        for p in [
            &mut cfg.output.log,
            &mut cfg.output.plot,
            &mut cfg.output.point,
            &mut cfg.output.multiplier,
        ] {
            rebase(base, p);
        }
        cfg.solver.validate().map_err(|e| format!("solver: {e}"))?;
        if !(cfg.certify.rho > 0.0 && cfg.certify.rho.is_finite()) {
            return Err("certify.rho: must be positive".into());
        }
        Ok(cfg)
    }

    /// Problem, start point and start multiplier. Without a start point CM
    /// uses a seeded random Stiefel point and RMC the rank-r truncation of the
    /// observed matrix.
    pub fn build(&self, seed: u64) -> Result<Built, String> {
        let (problem, default_x0) = match &self.problem {
            ProblemBlock::Cm(b) => {
                let inst = CmInstance::new(b.n, b.r, b.mu, b.len)
                    .map_err(|e| format!("problem.cm: {e}"))?;
                let x0 = inst.start(seed);
                (inst.problem().map_err(|e| e.to_string())?, x0)
            }
            ProblemBlock::Rmc(b) => {
                let (a, mask) = if let Some(path) = &b.observed {
                    let a = load_dense(path, DenseFormat::Csv).map_err(|e| e.to_string())?;
                    let mask = match &b.mask {
                        Some(m) => load_csv(m).map_err(|e| e.to_string())?,
                        None => Mat::from_element(a.nrows(), a.ncols(), 1.0),
                    };
                    (a, mask)
                } else if let Some(path) = &b.matrix_market {
                    load_matrix_market(path).map_err(|e| e.to_string())?
                } else {
                    let g = b.generator.expect("checked at load time");
                    let data = g
                        .generate(seed)
                        .map_err(|e| format!("problem.rmc.generator: {e}"))?;
                    (data.a, data.mask)
                };
                let inst = RmcInstance::new(a, mask, b.r, b.mu)
                    .map_err(|e| format!("problem.rmc: {e}"))?;
                let x0 = ManifoldPoint::fixed_rank_from_matrix(&inst.a, inst.r)
                    .unwrap_or_else(|_| inst.manifold().random_point(seed));
                (inst.problem().map_err(|e| e.to_string())?, x0)
            }
        };
        let x0 = match &self.start.point {
            Some(path) => {
                let a = load_csv(path).map_err(|e| e.to_string())?;
                ManifoldPoint::from_ambient(problem.manifold, a)
                    .map_err(|e| format!("start.point: {e}"))?
            }
            None => default_x0,
        };
        let (rows, cols) = problem.multiplier_shape();
        let y0 = match &self.start.multiplier {
            Some(path) => {
                let y = load_csv(path).map_err(|e| e.to_string())?;
                if y.shape() != (rows, cols) {
                    return Err(format!(
                        "start.multiplier: expected shape {:?}, found {:?}",
                        (rows, cols),
                        y.shape()
                    ));
                }
                y
            }
            None => Mat::zeros(rows, cols),
        };
        Ok(Built {
            problem,
            x0: Arc::new(x0),
            y0,
        })
    }
}
