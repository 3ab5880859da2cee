//! Globalized semismooth Newton method for `min_x l^ρ(x, y)` at a fixed
//! multiplier and penalty.
//!
//! Each iteration solves the regularized Newton system
//! `(G + ω I) V = −grad l^ρ` inexactly by tangent-space conjugate gradients,
//! with `ω = ‖grad‖^ν̄` and forcing term `min{η_k, ‖grad‖^{1+ν̄}}`. Directions
//! failing the sufficient-descent test are replaced by the negative gradient,
//! and steps are accepted by Armijo backtracking along the retraction.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::convex::BoundaryConvention;
use crate::geometry::{retract, tangent_project, ManifoldPoint, TangentVector};
use crate::lagrangian::{AugLagEval, ProblemSpec};
use crate::{Error, Mat, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    /// ν̄ ∈ (0, 1]: exponent of the regularization `ω_k = ‖grad‖^ν̄`.
    pub nu_bar: f64,
    /// Forcing sequence `η_k = eta_scale / (k + 1)^eta_power`.
    pub eta_scale: f64,
    pub eta_power: f64,
    /// Armijo constant in (0, 1/2).
    pub armijo: f64,
    /// Backtracking factor δ ∈ (0, 1).
    pub delta: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub p: f64,
    pub m_max: usize,
    pub cg_max_iter: usize,
    /// Absolute gradient-norm floor at which the solver stops regardless of
    /// the caller's predicate.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub jac_convention: BoundaryConvention,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            nu_bar: 1.0,
            eta_scale: 1.0,
            eta_power: 2.0,
            armijo: 1e-4,
            delta: 0.5,
            beta0: 1e-6,
            beta1: 1e-6,
            p: 2.0,
            m_max: 40,
            cg_max_iter: 500,
            grad_tol: 1e-12,
            max_iter: 200,
            jac_convention: BoundaryConvention::Zero,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| Err(Error::param(name, reason.to_string()));
        if !(self.nu_bar > 0.0 && self.nu_bar <= 1.0) {
            return bad("nu_bar", "must lie in (0, 1]");
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return bad("armijo", "must lie in (0, 1/2)");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta", "must lie in (0, 1)");
        }
        if !(self.beta0 > 0.0 && self.beta0 <= 1.0) {
            return bad("beta0", "must lie in (0, 1]");
        }
        if !(self.beta1 > 0.0 && self.p > 0.0) {
            return bad("beta1", "beta1 and p must be positive");
        }
        if !(self.eta_scale >= 0.0 && self.eta_power > 0.0) {
            return bad(
                "eta_scale",
                "forcing sequence must be nonnegative and vanish",
            );
        }
        if !(self.grad_tol >= 0.0) {
            return bad("grad_tol", "must be nonnegative");
        }
        Ok(())
    }

    fn eta(&self, k: usize) -> f64 {
        self.eta_scale / ((k + 1) as f64).powf(self.eta_power)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgStatus {
    Converged,
    MaxIterations,
    /// `⟨d, (H + ωI) d⟩ ≤ 1e-14 ‖d‖²` was hit; the iterate so far is returned.
    NonPositiveCurvature,
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: TangentVector,
    pub iterations: usize,
    pub residual_norm: f64,
    pub status: CgStatus,
}

/// Conjugate gradients for `(H + ω I) v = b` on a tangent space.
pub fn cg_solve<F>(
    mut op: F,
    shift: f64,
    b: &TangentVector,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome>
where
    F: FnMut(&TangentVector) -> Result<TangentVector>,
{
    if !(shift >= 0.0) {
        return Err(Error::param(
            "shift",
            format!("must be nonnegative, got {shift}"),
        ));
    }
    let mut x = TangentVector::zero(b.base());
    let mut r = b.clone();
    let mut d = b.clone();
    let mut rr = r.inner(&r)?;
    let done = |rr: f64| rr.sqrt() <= tol;
    if done(rr) {
        return Ok(CgOutcome {
            solution: x,
            iterations: 0,
            residual_norm: rr.sqrt(),
            status: CgStatus::Converged,
        });
    }
    for it in 1..=max_iter {
        let hd = op(&d)?.plus_scaled(shift, &d);
        let dhd = d.inner(&hd)?;
        if !dhd.is_finite() {
            return Err(Error::NonFinite("CG operator output".into()));
        }
        let dd = d.inner(&d)?;
        if dhd <= 1e-14 * dd {
            return Ok(CgOutcome {
                solution: x,
                iterations: it - 1,
                residual_norm: rr.sqrt(),
                status: CgStatus::NonPositiveCurvature,
            });
        }
        let alpha = rr / dhd;
        x = x.plus_scaled(alpha, &d);
        r = r.plus_scaled(-alpha, &hd);
        let rr_new = r.inner(&r)?;
        if done(rr_new) {
            return Ok(CgOutcome {
                solution: x,
                iterations: it,
                residual_norm: rr_new.sqrt(),
                status: CgStatus::Converged,
            });
        }
        d = r.plus_scaled(rr_new / rr, &d);
        rr = rr_new;
    }
    Ok(CgOutcome {
        solution: x,
        iterations: max_iter,
        residual_norm: rr.sqrt(),
        status: CgStatus::MaxIterations,
    })
}

/// Snapshot handed to the caller's stopping predicate.
pub struct InnerState<'e, 'p> {
    pub iteration: usize,
    pub eval: &'e AugLagEval<'p>,
}

impl InnerState<'_, '_> {
    pub fn grad_norm(&self) -> f64 {
        self.eval.grad_norm()
    }

    pub fn point(&self) -> &Arc<ManifoldPoint> {
        self.eval.point()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonStatus {
    Converged,
    MaxIterations,
    /// `m_max` backtracks did not satisfy the Armijo condition; the last
    /// accepted iterate is returned.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct NewtonStats {
    pub iterations: usize,
    pub cg_iterations: usize,
    pub gradient_fallbacks: usize,
    pub rank_drop_retries: usize,
    pub final_grad_norm: f64,
    pub objective_trace: Vec<f64>,
    pub status: NewtonStatus,
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub point: Arc<ManifoldPoint>,
    /// Shifted multiplier `ỹ` at the returned point.
    pub ytilde: Mat,
    pub stats: NewtonStats,
}

/// Minimizes `l^ρ(·, y)` from `x0` until `stop` accepts an iterate, the
/// gradient falls below `cfg.grad_tol`, or `cfg.max_iter` is reached.
pub fn ssn_minimize(
    problem: &ProblemSpec,
    rho: f64,
    y: &Mat,
    x0: &Arc<ManifoldPoint>,
    cfg: &NewtonConfig,
    stop: &mut dyn FnMut(&InnerState<'_, '_>) -> bool,
) -> Result<NewtonOutcome> {
    cfg.validate()?;
    let mut eval = AugLagEval::new(problem, rho, x0, y, cfg.jac_convention)?;
    let mut stats = NewtonStats {
        iterations: 0,
        cg_iterations: 0,
        gradient_fallbacks: 0,
        rank_drop_retries: 0,
        final_grad_norm: eval.grad_norm(),
        objective_trace: vec![eval.value],
        status: NewtonStatus::MaxIterations,
    };

    for k in 0.. {
        let gnorm = eval.grad_norm();
        stats.iterations = k;
        stats.final_grad_norm = gnorm;
        let state = InnerState {
            iteration: k,
            eval: &eval,
        };
        if stop(&state) || gnorm <= cfg.grad_tol {
            stats.status = NewtonStatus::Converged;
            break;
        }
        if k >= cfg.max_iter {
            stats.status = NewtonStatus::MaxIterations;
            break;
        }

        let omega = gnorm.powf(cfg.nu_bar);
        let forcing = cfg.eta(k).min(gnorm.powf(1.0 + cfg.nu_bar));
        // The gradient keeps a normal component of order eps*|egrad| that the
        // tangent-valued operator can never cancel; project once more so CG
        // can reach tolerances far below that.
        let neg_grad = tangent_project(eval.point(), &(eval.rgrad.coords() * -1.0))?;
        let cg = cg_solve(
            |d| eval.hess_vec(d),
            omega,
            &neg_grad,
            forcing,
            cfg.cg_max_iter,
        )?;
        stats.cg_iterations += cg.iterations;

        let mut direction = cg.solution.clone();
        let vnorm = direction.norm();
        // A truncated CG iterate (negative curvature) is still tested; a zero
        // iterate always falls back to the gradient.
        let sufficient = vnorm > 0.0
            && -eval.rgrad.inner(&direction)?
                >= cfg.beta0.min(cfg.beta1 * vnorm.powf(cfg.p)) * vnorm * vnorm;
        if !sufficient {
            direction = neg_grad;
            stats.gradient_fallbacks += 1;
        }
        let slope = eval.rgrad.inner(&direction)?;

        // Rounding allowance in the value comparison: once the predicted
        // decrease drops below a few ulps of |l| the exact test is noise, so
        // a candidate within the allowance is taken if its gradient is smaller.
        let slack = 10.0 * f64::EPSILON * (1.0 + eval.value.abs());
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.m_max {
            let trial = direction.scaled(step);
            match retract(eval.point(), &trial) {
                Ok(p) => {
                    let p = Arc::new(p);
                    let cand = AugLagEval::new(problem, rho, &p, y, cfg.jac_convention)?;
                    let target = eval.value + cfg.armijo * step * slope;
                    if cand.value <= target
                        || (cand.value <= target + slack && cand.grad_norm() < gnorm)
                    {
                        accepted = Some(cand);
                        break;
                    }
                }
                Err(Error::RankDrop { .. }) => stats.rank_drop_retries += 1,
                Err(e) => return Err(e),
            }
            step *= cfg.delta;
        }
        match accepted {
            Some(cand) => {
                log::trace!(
                    "inner {k}: |grad| = {gnorm:.3e}, cg {} ({:?}), fallback {}, step {step:e}",
                    cg.iterations,
                    cg.status,
                    !sufficient
                );
                stats.objective_trace.push(cand.value);
                eval = cand;
            }
            None => {
                log::debug!("line search exhausted at inner iteration {k}, |grad| = {gnorm:e}");
                stats.status = NewtonStatus::LineSearchFailed;
                break;
            }
        }
    }

    Ok(NewtonOutcome {
        point: Arc::clone(eval.point()),
        ytilde: eval.ytilde.clone(),
        stats,
    })
}
