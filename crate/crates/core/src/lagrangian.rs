//! Problem-level quantities for `min f(x) + θ(g(x))` over `x ∈ M`.
//!
//! The augmented Lagrangian is evaluated through the Moreau envelope,
//!
//! ```text
//! l^ρ(x, y) = f(x) + env_ρθ(g(x) + y/ρ) − ‖y‖² / (2ρ),
//! ```
//!
//! its x-gradient is the Lagrangian gradient at the shifted multiplier
//! `ỹ = ∇env_ρθ(g(x) + y/ρ)`, and its y-gradient is `(ỹ − y)/ρ`.

use std::fmt;
use std::sync::Arc;

use crate::convex::{moreau, BoundaryConvention, ProxFunction, ProxJacobian};
use crate::geometry::{riem_grad, riem_hess_vec, Manifold, ManifoldPoint, TangentVector};
use crate::{Error, Mat, Result};

/// Smooth objective `f`, given on ambient coordinates.
pub trait SmoothObjective: Send + Sync {
    fn value(&self, x: &Mat) -> f64;
    fn gradient(&self, x: &Mat) -> Mat;
    fn hess_vec(&self, x: &Mat, v: &Mat) -> Mat;
}

/// Smooth inner map `g`, given on ambient coordinates.
pub trait SmoothMap: Send + Sync {
    fn output_shape(&self) -> (usize, usize);
    fn value(&self, x: &Mat) -> Mat;
    /// `Dg(x)[v]`.
    fn jvp(&self, x: &Mat, v: &Mat) -> Mat;
    /// `Dg(x)*[w]`.
    fn vjp(&self, x: &Mat, w: &Mat) -> Mat;
    /// `∇²⟨y, g⟩(x)[v]`.
    fn weighted_hess_vec(&self, x: &Mat, y: &Mat, v: &Mat) -> Mat;
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub manifold: Manifold,
    pub objective: Arc<dyn SmoothObjective>,
    pub constraint: Arc<dyn SmoothMap>,
    pub theta: Arc<dyn ProxFunction>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("manifold", &self.manifold)
            .field("multiplier_shape", &self.multiplier_shape())
            .field("theta", &self.theta)
            .finish()
    }
}

impl ProblemSpec {
    pub fn multiplier_shape(&self) -> (usize, usize) {
        self.constraint.output_shape()
    }

    fn check_multiplier(&self, y: &Mat) -> Result<()> {
        let expected = self.multiplier_shape();
        if y.shape() != expected {
            return Err(Error::ShapeMismatch {
                context: "multiplier",
                expected,
                found: y.shape(),
            });
        }
        Ok(())
    }

    fn check_point(&self, x: &ManifoldPoint) -> Result<()> {
        if x.manifold() != self.manifold {
            return Err(Error::Invariant(format!(
                "point lives on {:?}, problem on {:?}",
                x.manifold(),
                self.manifold
            )));
        }
        Ok(())
    }

    /// `f(x) + θ(g(x))`.
    pub fn objective_value(&self, x: &ManifoldPoint) -> f64 {
        let a = x.ambient();
        self.objective.value(a) + self.theta.value(&self.constraint.value(a))
    }

    /// `Π_X(∇f(X) + Dg(X)*[y])`.
    pub fn lagrangian_rgrad(&self, x: &Arc<ManifoldPoint>, y: &Mat) -> Result<TangentVector> {
        self.check_point(x)?;
        self.check_multiplier(y)?;
        let a = x.ambient();
        riem_grad(x, &(self.objective.gradient(a) + self.constraint.vjp(a, y)))
    }

    /// Riemannian Hessian of `L(·, y) = f + ⟨y, g⟩` applied to `Ξ`.
    pub fn lagrangian_hess_vec(
        &self,
        x: &Arc<ManifoldPoint>,
        y: &Mat,
        xi: &TangentVector,
    ) -> Result<TangentVector> {
        self.check_point(x)?;
        self.check_multiplier(y)?;
        let a = x.ambient();
        let egrad = self.objective.gradient(a) + self.constraint.vjp(a, y);
        let ehess = self.objective.hess_vec(a, xi.coords())
            + self.constraint.weighted_hess_vec(a, y, xi.coords());
        riem_hess_vec(x, &egrad, &ehess, xi)
    }
}

/// Everything the inner solver needs at one `(x, y, ρ)`: value, gradient,
/// shifted multiplier and the selected prox Jacobian.
pub struct AugLagEval<'a> {
    problem: &'a ProblemSpec,
    point: Arc<ManifoldPoint>,
    rho: f64,
    y: Mat,
    pub g: Mat,
    /// `ỹ = ∇env_ρθ(g(x) + y/ρ)`.
    pub ytilde: Mat,
    pub value: f64,
    /// Euclidean gradient `∇f(x) + Dg(x)*[ỹ]`.
    pub egrad: Mat,
    pub rgrad: TangentVector,
    pub jacobian: ProxJacobian,
}

impl<'a> AugLagEval<'a> {
    pub fn new(
        problem: &'a ProblemSpec,
        rho: f64,
        x: &Arc<ManifoldPoint>,
        y: &Mat,
        convention: BoundaryConvention,
    ) -> Result<Self> {
        problem.check_point(x)?;
        problem.check_multiplier(y)?;
        let a = x.ambient();
        let g = problem.constraint.value(a);
        let shifted = &g + y / rho;
        let env = moreau(problem.theta.as_ref(), rho, &shifted)?;
        let jacobian = problem
            .theta
            .prox_jacobian(1.0 / rho, &shifted, convention)?;
        let value = problem.objective.value(a) + env.value - y.norm_squared() / (2.0 * rho);
        let egrad = problem.objective.gradient(a) + problem.constraint.vjp(a, &env.grad);
        let rgrad = riem_grad(x, &egrad)?;
        if !value.is_finite() || !rgrad.norm().is_finite() {
            return Err(Error::NonFinite("augmented Lagrangian".into()));
        }
        Ok(AugLagEval {
            problem,
            point: Arc::clone(x),
            rho,
            y: y.clone(),
            g,
            ytilde: env.grad,
            value,
            egrad,
            rgrad,
            jacobian,
        })
    }

    pub fn point(&self) -> &Arc<ManifoldPoint> {
        &self.point
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn grad_norm(&self) -> f64 {
        self.rgrad.norm()
    }

    /// `∇_y l^ρ(x, y) = (ỹ − y)/ρ`.
    pub fn dual_gradient(&self) -> Mat {
        (&self.ytilde - &self.y) / self.rho
    }

    /// `‖ỹ − y‖ = ρ ‖∇_y l^ρ(x, y)‖`.
    pub fn dual_step_norm(&self) -> f64 {
        (&self.ytilde - &self.y).norm()
    }

    /// Generalized Hessian element `Hess_x L(x, ỹ) + Π Dg* G Dg` with
    /// `G = ρ(I − J)` for the stored prox Jacobian `J`.
    pub fn hess_vec(&self, xi: &TangentVector) -> Result<TangentVector> {
        self.hess_vec_with(&self.jacobian, xi)
    }

    pub fn hess_vec_with(&self, jac: &ProxJacobian, xi: &TangentVector) -> Result<TangentVector> {
        let a = self.point.ambient();
        let c = &self.problem.constraint;
        let dg = c.jvp(a, xi.coords());
        let g_term = (&dg - jac.apply(&dg)) * self.rho;
        let ehess = self.problem.objective.hess_vec(a, xi.coords())
            + c.weighted_hess_vec(a, &self.ytilde, xi.coords())
            + c.vjp(a, &g_term);
        riem_hess_vec(&self.point, &self.egrad, &ehess, xi)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::param("rho", format!("must be positive, got {rho}")));
    }
    Ok(())
}

/// `l^ρ(x, y)`.
pub fn auglag_value(p: &ProblemSpec, rho: f64, x: &Arc<ManifoldPoint>, y: &Mat) -> Result<f64> {
    check_rho(rho)?;
    Ok(AugLagEval::new(p, rho, x, y, BoundaryConvention::Zero)?.value)
}

/// `grad_x l^ρ(x, y) = Π_X(∇f(x) + Dg(x)*[ỹ])`.
pub fn auglag_rgrad(
    p: &ProblemSpec,
    rho: f64,
    x: &Arc<ManifoldPoint>,
    y: &Mat,
) -> Result<TangentVector> {
    check_rho(rho)?;
    Ok(AugLagEval::new(p, rho, x, y, BoundaryConvention::Zero)?.rgrad)
}

/// One element of the generalized Hessian of `l^ρ(·, y)` applied to `Ξ`.
pub fn auglag_ghess_vec(
    p: &ProblemSpec,
    rho: f64,
    x: &Arc<ManifoldPoint>,
    y: &Mat,
    xi: &TangentVector,
    convention: BoundaryConvention,
) -> Result<TangentVector> {
    check_rho(rho)?;
    AugLagEval::new(p, rho, x, y, convention)?.hess_vec(xi)
}

/// `y⁺ = y + ρ̃ ∇_y l^ρ(x, y) = (1 − ρ̃/ρ) y + (ρ̃/ρ) ỹ`.
pub fn multiplier_update(
    p: &ProblemSpec,
    rho: f64,
    rho_tilde: f64,
    x: &Arc<ManifoldPoint>,
    y: &Mat,
) -> Result<Mat> {
    check_rho(rho)?;
    if !(rho_tilde > 0.0 && rho_tilde <= rho) {
        return Err(Error::param(
            "rho_tilde",
            format!("must lie in (0, rho = {rho}], got {rho_tilde}"),
        ));
    }
    let eval = AugLagEval::new(p, rho, x, y, BoundaryConvention::Zero)?;
    Ok(step_multiplier(
        y,
        &eval.ytilde,
        rho,
        rho_tilde,
        p.theta.dual_bound(),
    ))
}

/// The step is a convex combination of `y` and `ỹ ∈ dom θ*`. With a box
/// domain and `y` inside it, rounding is clipped so the box holds exactly.
pub(crate) fn step_multiplier(
    y: &Mat,
    ytilde: &Mat,
    rho: f64,
    rho_tilde: f64,
    bound: Option<f64>,
) -> Mat {
    let next = if rho_tilde == rho {
        ytilde.clone()
    } else {
        y + (ytilde - y) * (rho_tilde / rho)
    };
    match bound {
        Some(b) if y.amax() <= b => next.map(|v| v.clamp(-b, b)),
        _ => next,
    }
}

/// `R(x, y) = ‖grad_x L(x, y)‖ + ‖g(x) − prox_θ(g(x) + y)‖`.
pub fn kkt_residual(p: &ProblemSpec, x: &Arc<ManifoldPoint>, y: &Mat) -> Result<f64> {
    let grad = p.lagrangian_rgrad(x, y)?;
    let g = p.constraint.value(x.ambient());
    let natural = &g - p.theta.prox(1.0, &(&g + y))?;
    let r = grad.norm() + natural.norm();
    if !r.is_finite() {
        return Err(Error::NonFinite("KKT residual".into()));
    }
    Ok(r)
}
