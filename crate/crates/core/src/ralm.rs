//! Inexact Riemannian augmented Lagrangian outer loop.
//!
//! ```text
//! x^{k+1} ≈ argmin_x l^{ρ_k}(x, y^k)
//! y^{k+1} = y^k + ρ̃_k ∇_y l^{ρ_k}(x^{k+1}, y^k)
//! ```
//!
//! The inner solve is accepted by a gradient-based rule
//! `√ρ̃_k ‖grad_x l^{ρ_k}(x^{k+1}, y^k)‖ ≤ ε_k · {1 | min(1, s) | min(1, s²)}`
//! with `s = ‖ρ̃_k ∇_y l^{ρ_k}(x^{k+1}, y^k)‖`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::ManifoldPoint;
use crate::lagrangian::{auglag_value, kkt_residual, step_multiplier, ProblemSpec};
use crate::newton::{ssn_minimize, NewtonConfig, NewtonStatus};
use crate::{Error, Mat, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// `ε_k`.
    A,
    /// `ε_k · min{1, s}`.
    #[default]
    B,
    /// `ε_k · min{1, s²}`.
    C,
}

/// Gradient-norm threshold of the chosen inner stopping rule: its right-hand
/// side divided by `√ρ̃`.
pub fn inner_threshold(
    variant: Criterion,
    eps: f64,
    rho_tilde: f64,
    dual_step_norm: f64,
) -> Result<f64> {
    if !(rho_tilde > 0.0) {
        return Err(Error::param(
            "rho_tilde",
            format!("must be positive, got {rho_tilde}"),
        ));
    }
    if !(eps >= 0.0 && dual_step_norm >= 0.0) {
        return Err(Error::param("eps", "inputs must be nonnegative"));
    }
    let factor = match variant {
        Criterion::A => 1.0,
        Criterion::B => dual_step_norm.min(1.0),
        Criterion::C => (dual_step_norm * dual_step_norm).min(1.0),
    };
    Ok(eps * factor / rho_tilde.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RalmConfig {
    pub rho0: f64,
    /// Base level ρ̄; when positive the multiplier step is `ρ̃_k = ρ_k − ρ̄`.
    pub rho_bar: f64,
    /// Penalty growth factor γ ≥ 1.
    pub gamma: f64,
    pub rho_max: f64,
    /// Penalty grows when `R_{k+1} > stall_ratio · R_k`.
    pub stall_ratio: f64,
    /// `ε_k = eps0 · eps_decay^k`.
    pub eps0: f64,
    pub eps_decay: f64,
    pub criterion: Criterion,
    /// Optional extra requirement `‖grad_x l‖ ≤ c ‖y^{k+1} − y^k‖`.
    pub exact_c: Option<f64>,
    pub kkt_tol: f64,
    pub max_outer: usize,
    pub newton: NewtonConfig,
}

impl Default for RalmConfig {
    fn default() -> Self {
        RalmConfig {
            rho0: 1.0,
            rho_bar: 0.0,
            gamma: 4.0,
            rho_max: 1e6,
            stall_ratio: 0.5,
            eps0: 1.0,
            eps_decay: 0.5,
            criterion: Criterion::B,
            exact_c: None,
            kkt_tol: 1e-8,
            max_outer: 50,
            newton: NewtonConfig::default(),
        }
    }
}

impl RalmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return Err(Error::param("rho0", "must be positive"));
        }
        if !(self.rho_bar >= 0.0 && self.rho_bar < self.rho0) {
            return Err(Error::param("rho_bar", "must lie in [0, rho0)"));
        }
        if !(self.gamma >= 1.0) {
            return Err(Error::param("gamma", "must be >= 1"));
        }
        if !(self.rho_max >= self.rho0) {
            return Err(Error::param("rho_max", "must be >= rho0"));
        }
        if !(self.eps0 > 0.0 && self.eps_decay > 0.0 && self.eps_decay < 1.0) {
            return Err(Error::param(
                "eps_decay",
                "eps0 > 0 and eps_decay in (0, 1) keep the error sum finite",
            ));
        }
        if !(self.stall_ratio > 0.0 && self.stall_ratio <= 1.0) {
            return Err(Error::param("stall_ratio", "must lie in (0, 1]"));
        }
        if let Some(c) = self.exact_c {
            if !(c > 0.0) {
                return Err(Error::param("exact_c", "must be positive"));
            }
        }
        if !(self.kkt_tol >= 0.0) {
            return Err(Error::param("kkt_tol", "must be nonnegative"));
        }
        self.newton.validate()
    }

    fn rho_tilde(&self, rho: f64) -> f64 {
        if self.rho_bar > 0.0 {
            rho - self.rho_bar
        } else {
            rho
        }
    }
}

/// Telemetry for one outer iteration. Record `k = 0` describes the start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub k: usize,
    pub rho: f64,
    pub rho_tilde: f64,
    pub inner_iters: usize,
    /// `‖grad_x l^{ρ_k}(x^{k+1}, y^k)‖`.
    pub grad_norm: f64,
    /// `R(x^{k+1}, y^{k+1})`.
    pub kkt_residual: f64,
    /// `‖y^{k+1} − y^k‖`.
    pub dual_step_norm: f64,
    pub auglag: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RalmStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct RalmOutcome {
    pub point: Arc<ManifoldPoint>,
    pub multiplier: Mat,
    pub records: Vec<IterateRecord>,
    pub status: RalmStatus,
}

pub fn ralm_solve(
    problem: &ProblemSpec,
    cfg: &RalmConfig,
    x0: &Arc<ManifoldPoint>,
    y0: &Mat,
) -> Result<RalmOutcome> {
    cfg.validate()?;
    if let Some(l1_bound) = problem.theta.dual_bound() {
        if y0.amax() > l1_bound {
            log::warn!("initial multiplier leaves the l1 dual box (|y0|_inf > {l1_bound})");
        }
    }

    let mut x = Arc::clone(x0);
    let mut y = y0.clone();
    let mut rho = cfg.rho0;
    let mut residual = kkt_residual(problem, &x, &y)?;
    let start =
        crate::lagrangian::AugLagEval::new(problem, rho, &x, &y, cfg.newton.jac_convention)?;
    let mut records = vec![IterateRecord {
        k: 0,
        rho,
        rho_tilde: cfg.rho_tilde(rho),
        inner_iters: 0,
        grad_norm: start.grad_norm(),
        kkt_residual: residual,
        dual_step_norm: 0.0,
        auglag: start.value,
    }];
    drop(start);

    let mut status = if residual <= cfg.kkt_tol {
        RalmStatus::Converged
    } else {
        RalmStatus::MaxIterations
    };
    let mut k = 0;
    while status != RalmStatus::Converged && k < cfg.max_outer {
        let rho_tilde = cfg.rho_tilde(rho);
        let eps = cfg.eps0 * cfg.eps_decay.powi(k as i32);
        let ratio = rho_tilde / rho;
        let mut stop = |s: &crate::newton::InnerState<'_, '_>| {
            let dual = ratio * s.eval.dual_step_norm();
            let g = s.grad_norm();
            let thr = inner_threshold(cfg.criterion, eps, rho_tilde, dual).unwrap_or(0.0);
            g <= thr && cfg.exact_c.is_none_or(|c| g <= c * dual)
        };
        let inner = ssn_minimize(problem, rho, &y, &x, &cfg.newton, &mut stop).map_err(|e| {
            Error::Inner {
                outer: k,
                source: Box::new(e),
            }
        })?;
        log::debug!(
            "outer {k}: inner {:?}, {} iterations, {} CG steps, {} gradient fallbacks",
            inner.stats.status,
            inner.stats.iterations,
            inner.stats.cg_iterations,
            inner.stats.gradient_fallbacks
        );
        if inner.stats.status == NewtonStatus::LineSearchFailed {
            log::warn!(
                "outer {k}: inner line search exhausted at |grad| = {:e}",
                inner.stats.final_grad_norm
            );
        }

        let y_next = step_multiplier(
            &y,
            &inner.ytilde,
            rho,
            rho_tilde,
            problem.theta.dual_bound(),
        );
        let dual_step = (&y_next - &y).norm();
        let auglag = auglag_value(problem, rho, &inner.point, &y)?;
        x = inner.point;
        let next_residual = kkt_residual(problem, &x, &y_next)?;
        y = y_next;
        if !(auglag.is_finite() && dual_step.is_finite()) {
            return Err(Error::NonFinite(format!("outer iteration {k}")));
        }
        k += 1;
        records.push(IterateRecord {
            k,
            rho,
            rho_tilde,
            inner_iters: inner.stats.iterations,
            grad_norm: inner.stats.final_grad_norm,
            kkt_residual: next_residual,
            dual_step_norm: dual_step,
            auglag,
        });
        log::info!(
            "outer {k}: rho = {rho:.3e}, inner = {}, R = {next_residual:.3e}",
            inner.stats.iterations
        );

        if next_residual <= cfg.kkt_tol {
            status = RalmStatus::Converged;
        } else if next_residual > cfg.stall_ratio * residual {
            rho = (cfg.gamma * rho).min(cfg.rho_max);
        }
        residual = next_residual;
    }

    Ok(RalmOutcome {
        point: x,
        multiplier: y,
        records,
        status,
    })
}
