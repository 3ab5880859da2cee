//! Proximal toolkit for the outer convex function `θ`.
//!
//! A [`ProxFunction`] exposes values, proximal maps, a B-subdifferential
//! element of the proximal map, subgradient membership and the free pattern
//! of the affine hull of the critical cone. Moreau envelopes are derived from
//! the proximal map:
//!
//! ```text
//! env_ρθ(p) = θ(q) + ρ/2 ‖p − q‖²,   ∇env_ρθ(p) = ρ (p − q),   q = prox_{θ/ρ}(p)
//! ```
//!
//! Only the weighted ℓ1 norm ships.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::{Error, Mat, Result};

/// Entries with `||p| − tμ| ≤ KINK_TOL` are treated as kinks of the prox.
pub const KINK_TOL: f64 = 1e-12;
/// Largest number of kink entries for which all extreme Jacobians are listed.
pub const ENUMERATION_CAP: usize = 12;

/// Which side of a kink the prox Jacobian selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryConvention {
    /// The prox is locally constant on the selected side.
    #[default]
    Zero,
    One,
}

/// Diagonal B-subdifferential element of `prox_{tθ}` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxJacobian {
    /// 0/1 entries, same shape as the argument.
    pub mask: Mat,
    pub t: f64,
    /// Kink entries where `convention` decided the bit.
    pub boundary: Vec<(usize, usize)>,
    pub convention: BoundaryConvention,
}

impl ProxJacobian {
    pub fn apply(&self, d: &Mat) -> Mat {
        self.mask.component_mul(d)
    }

    /// All `2^b` extreme elements obtained by flipping the kink bits, or
    /// `None` when `b` exceeds `cap`.
    pub fn extremes(&self, cap: usize) -> Option<Vec<ProxJacobian>> {
        let b = self.boundary.len();
        if b > cap {
            return None;
        }
        let out = (0u32..(1u32 << b))
            .map(|bits| {
                let mut mask = self.mask.clone();
                for (k, &(i, j)) in self.boundary.iter().enumerate() {
                    mask[(i, j)] = f64::from((bits >> k) & 1);
                }
                ProxJacobian {
                    mask,
                    t: self.t,
                    boundary: self.boundary.clone(),
                    convention: self.convention,
                }
            })
            .collect();
        Some(out)
    }
}

pub trait ProxFunction: Debug + Send + Sync {
    fn value(&self, z: &Mat) -> f64;

    /// `argmin_u θ(u) + ‖u − p‖² / (2t)`.
    fn prox(&self, t: f64, p: &Mat) -> Result<Mat>;

    fn prox_jacobian(
        &self,
        t: f64,
        p: &Mat,
        convention: BoundaryConvention,
    ) -> Result<ProxJacobian>;

    /// Whether `y ∈ ∂θ(z)` up to `tol`.
    fn in_subdifferential(&self, z: &Mat, y: &Mat, tol: f64) -> bool;

    /// 1 where directions are free in `aff C_θ(z, y)`, 0 where they are pinned
    /// to zero. Assumes `y ∈ ∂θ(z)`.
    fn critical_free_mask(&self, z: &Mat, y: &Mat, tol: f64) -> Mat;

    /// Entrywise bound on `dom θ*` when it is a box, e.g. `μ` for `μ‖·‖₁`.
    fn dual_bound(&self) -> Option<f64> {
        None
    }

    /// `∇env_ρθ(p) = ρ (p − prox_{θ/ρ}(p))`. Override when a direct formula
    /// avoids the cancellation in the difference.
    fn envelope_grad(&self, rho: f64, p: &Mat) -> Result<Mat> {
        Ok((p - self.prox(1.0 / rho, p)?) * rho)
    }
}

/// `θ(z) = μ ‖z‖₁` (entrywise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Norm {
    weight: f64,
}

impl L1Norm {
    pub fn new(weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::param(
                "mu",
                format!("weight must be positive, got {weight}"),
            ));
        }
        Ok(L1Norm { weight })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

fn check_step(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param(
            "t",
            format!("prox step must be positive, got {t}"),
        ));
    }
    Ok(())
}

impl ProxFunction for L1Norm {
    fn value(&self, z: &Mat) -> f64 {
        self.weight * z.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn prox(&self, t: f64, p: &Mat) -> Result<Mat> {
        check_step(t)?;
        let thr = t * self.weight;
        Ok(p.map(|v| v.signum() * (v.abs() - thr).max(0.0)))
    }

    fn prox_jacobian(
        &self,
        t: f64,
        p: &Mat,
        convention: BoundaryConvention,
    ) -> Result<ProxJacobian> {
        check_step(t)?;
        let thr = t * self.weight;
        let tie = match convention {
            BoundaryConvention::Zero => 0.0,
            BoundaryConvention::One => 1.0,
        };
        let mut boundary = Vec::new();
        let mut mask = Mat::zeros(p.nrows(), p.ncols());
        for j in 0..p.ncols() {
            for i in 0..p.nrows() {
                let a = p[(i, j)].abs();
                mask[(i, j)] = if (a - thr).abs() <= KINK_TOL {
                    boundary.push((i, j));
                    tie
                } else if a > thr {
                    1.0
                } else {
                    0.0
                };
            }
        }
        Ok(ProxJacobian {
            mask,
            t,
            boundary,
            convention,
        })
    }

    fn in_subdifferential(&self, z: &Mat, y: &Mat, tol: f64) -> bool {
        if z.shape() != y.shape() {
            return false;
        }
        let mu = self.weight;
        z.iter().zip(y.iter()).all(|(&zi, &yi)| {
            yi.abs() <= mu + tol && (zi.abs() <= tol || (yi - mu * zi.signum()).abs() <= tol)
        })
    }

    fn critical_free_mask(&self, z: &Mat, y: &Mat, tol: f64) -> Mat {
        let mu = self.weight;
        z.zip_map(y, |zi, yi| {
            if zi.abs() > tol || yi.abs() >= mu - tol {
                1.0
            } else {
                0.0
            }
        })
    }

    fn dual_bound(&self) -> Option<f64> {
        Some(self.weight)
    }

    /// Projection of `ρp` onto `[−μ, μ]`.
    fn envelope_grad(&self, rho: f64, p: &Mat) -> Result<Mat> {
        check_step(1.0 / rho)?;
        let w = self.weight;
        Ok(p.map(|v| (rho * v).clamp(-w, w)))
    }
}

/// Moreau envelope value, gradient and the underlying proximal point.
#[derive(Debug, Clone)]
pub struct Moreau {
    pub value: f64,
    pub grad: Mat,
    pub prox: Mat,
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::param("rho", format!("must be positive, got {rho}")));
    }
    Ok(())
}

pub fn moreau(theta: &dyn ProxFunction, rho: f64, p: &Mat) -> Result<Moreau> {
    check_rho(rho)?;
    let q = theta.prox(1.0 / rho, p)?;
    let diff = p - &q;
    let value = theta.value(&q) + 0.5 * rho * diff.norm_squared();
    Ok(Moreau {
        value,
        grad: theta.envelope_grad(rho, p)?,
        prox: q,
    })
}

/// `env_ρθ(p) = min_u θ(u) + ρ/2 ‖p − u‖²`.
pub fn moreau_env(theta: &dyn ProxFunction, rho: f64, p: &Mat) -> Result<f64> {
    Ok(moreau(theta, rho, p)?.value)
}

/// `∇env_ρθ(p) = ρ (p − prox_{θ/ρ}(p))`.
pub fn moreau_grad(theta: &dyn ProxFunction, rho: f64, p: &Mat) -> Result<Mat> {
    Ok(moreau(theta, rho, p)?.grad)
}
