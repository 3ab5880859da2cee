//! Second-order certificates and rate diagnostics.
//!
//! The critical subspace is `{ξ ∈ T_X M : Dg(X)ξ ∈ aff C_θ(g(X), y)}`; the
//! M-SSOSC certificate is the smallest eigenvalue of `Hess_x L(X, y)`
//! restricted to it. The generalized-Hessian certificate is the smallest
//! eigenvalue of `Hess_x L(X, ỹ) + Π Dg* ρ(I − J) Dg` on the whole tangent
//! space, minimized over the extreme elements `J` of the prox Jacobian.

use std::sync::Arc;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::convex::{BoundaryConvention, ENUMERATION_CAP};
use crate::geometry::{sorted_svd, tangent_basis, ManifoldPoint, TangentVector};
use crate::lagrangian::{kkt_residual, AugLagEval, ProblemSpec};
use crate::{Error, Mat, Result};

/// Minimum eigenvalue above which a certificate holds.
pub const CERT_TOL: f64 = 1e-9;
/// Singular values below this span the critical subspace.
pub const NULL_TOL: f64 = 1e-10;
/// Complementarity tolerance for `y ∈ ∂θ(g(X))`.
pub const COMPLEMENTARITY_TOL: f64 = 1e-8;
/// Largest tangent dimension assembled densely.
pub const DENSE_LIMIT: usize = 4000;

/// Orthonormal tangent vectors at a common base point.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    pub vectors: Vec<TangentVector>,
}

impl SubspaceBasis {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for (i, a) in self.vectors.iter().enumerate() {
            for (j, b) in self.vectors.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                let ip = a.coords().dot(b.coords());
                err = err.max((ip - target).abs());
            }
        }
        err
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    Mssosc,
    GeneralizedHessian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    Fails,
    /// Zero-dimensional subspace: holds vacuously.
    DegenerateHolds,
}

impl Verdict {
    pub fn holds(self) -> bool {
        !matches!(self, Verdict::Fails)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    /// `None` for a zero-dimensional subspace.
    pub min_eigenvalue: Option<f64>,
    pub dimension: usize,
    /// Kink entries of the prox argument.
    pub boundary_entries: usize,
    /// Number of Jacobian elements whose operator was assembled.
    pub elements_evaluated: usize,
    /// Only the convention element was used although kinks were present.
    pub partial: bool,
    pub verdict: Verdict,
}

impl Certificate {
    fn from_eig(kind: CertificateKind, min: Option<f64>, dim: usize, tol: f64) -> Self {
        let verdict = match min {
            None => Verdict::DegenerateHolds,
            Some(v) if v > tol => Verdict::Holds,
            Some(_) => Verdict::Fails,
        };
        Certificate {
            kind,
            min_eigenvalue: min,
            dimension: dim,
            boundary_entries: 0,
            elements_evaluated: 0,
            partial: false,
            verdict,
        }
    }
}

fn flatten(vs: &[TangentVector]) -> Mat {
    let len = vs.first().map_or(0, |v| v.coords().len());
    let mut m = Mat::zeros(len, vs.len());
    for (j, v) in vs.iter().enumerate() {
        m.column_mut(j).copy_from_slice(v.coords().as_slice());
    }
    m
}

fn min_eig_sym(b: Mat) -> Option<f64> {
    if b.nrows() == 0 {
        return None;
    }
    let sym = (&b + b.transpose()) * 0.5;
    Some(SymmetricEigen::new(sym).eigenvalues.min())
}

/// Matrix `Bᵀ H B` of a tangent operator over the basis `B`.
fn restricted<F>(basis: &[TangentVector], mut op: F) -> Result<Mat>
where
    F: FnMut(&TangentVector) -> Result<TangentVector>,
{
    let images = basis.iter().map(&mut op).collect::<Result<Vec<_>>>()?;
    let b = flatten(basis);
    let hb = flatten(&images);
    let m = b.transpose() * hb;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("restricted Hessian".into()));
    }
    Ok(m)
}

/// Orthonormal basis of `{ξ ∈ T_X M : (Dg(X)ξ)_ij = 0 at pinned entries}`.
pub fn critical_cone_basis(
    p: &ProblemSpec,
    x: &Arc<ManifoldPoint>,
    y: &Mat,
) -> Result<SubspaceBasis> {
    let a = x.ambient();
    let z = p.constraint.value(a);
    if y.shape() != z.shape() {
        return Err(Error::ShapeMismatch {
            context: "multiplier",
            expected: z.shape(),
            found: y.shape(),
        });
    }
    if !p.theta.in_subdifferential(&z, y, COMPLEMENTARITY_TOL) {
        return Err(Error::NotStationary {
            residual: kkt_residual(p, x, y)?,
        });
    }
    let free = p.theta.critical_free_mask(&z, y, COMPLEMENTARITY_TOL);
    let pinned: Vec<(usize, usize)> = (0..free.ncols())
        .flat_map(|j| (0..free.nrows()).map(move |i| (i, j)))
        .filter(|&(i, j)| free[(i, j)] == 0.0)
        .collect();
    let tangent = tangent_basis(x);
    let d = tangent.len();
    if pinned.is_empty() || d == 0 {
        return Ok(SubspaceBasis { vectors: tangent });
    }

    let rows = pinned.len().max(d);
    let mut c = Mat::zeros(rows, d);
    for (k, t) in tangent.iter().enumerate() {
        let dg = p.constraint.jvp(a, t.coords());
        for (row, &(i, j)) in pinned.iter().enumerate() {
            c[(row, k)] = dg[(i, j)];
        }
    }
    let (_, sv, v) = sorted_svd(&c)?;
    let vectors = (0..d)
        .filter(|&k| sv[k] < NULL_TOL)
        .map(|k| {
            let mut acc = TangentVector::zero(x);
            for (l, t) in tangent.iter().enumerate() {
                acc = acc.plus_scaled(v[(l, k)], t);
            }
            acc
        })
        .collect();
    Ok(SubspaceBasis { vectors })
}

/// Smallest eigenvalue of `Hess_x L(X, y)` on the critical subspace.
pub fn mssosc_certificate(p: &ProblemSpec, x: &Arc<ManifoldPoint>, y: &Mat) -> Result<Certificate> {
    let basis = critical_cone_basis(p, x, y)?;
    mssosc_on_basis(p, x, y, &basis, CERT_TOL)
}

/// Same as [`mssosc_certificate`] for a caller-supplied orthonormal basis.
pub fn mssosc_on_basis(
    p: &ProblemSpec,
    x: &Arc<ManifoldPoint>,
    y: &Mat,
    basis: &SubspaceBasis,
    tol: f64,
) -> Result<Certificate> {
    let m = restricted(&basis.vectors, |xi| p.lagrangian_hess_vec(x, y, xi))?;
    Ok(Certificate::from_eig(
        CertificateKind::Mssosc,
        min_eig_sym(m),
        basis.dim(),
        tol,
    ))
}

/// Smallest eigenvalue of the generalized Hessian of `l^ρ(·, y)` on `T_X M`.
/// With `enumerate`, every extreme prox Jacobian is tried when there are at
/// most [`ENUMERATION_CAP`] kinks; otherwise the convention element is used
/// and the certificate is flagged partial.
pub fn genhess_min_eig(
    p: &ProblemSpec,
    rho: f64,
    x: &Arc<ManifoldPoint>,
    y: &Mat,
    enumerate: bool,
) -> Result<Certificate> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::param("rho", format!("must be positive, got {rho}")));
    }
    let dim = p.manifold.dimension();
    if dim > DENSE_LIMIT {
        return Err(Error::TooLarge {
            dim,
            limit: DENSE_LIMIT,
        });
    }
    let eval = AugLagEval::new(p, rho, x, y, BoundaryConvention::Zero)?;
    let boundary = eval.jacobian.boundary.len();
    let (elements, partial) = if enumerate {
        match eval.jacobian.extremes(ENUMERATION_CAP) {
            Some(all) => (all, false),
            None => (vec![eval.jacobian.clone()], true),
        }
    } else {
        (vec![eval.jacobian.clone()], boundary > 0)
    };

    let basis = tangent_basis(x);
    let mut min: Option<f64> = None;
    for jac in &elements {
        let m = restricted(&basis, |xi| eval.hess_vec_with(jac, xi))?;
        if let Some(v) = min_eig_sym(m) {
            min = Some(min.map_or(v, |cur| cur.min(v)));
        }
    }
    let mut cert = Certificate::from_eig(
        CertificateKind::GeneralizedHessian,
        min,
        basis.len(),
        CERT_TOL,
    );
    cert.boundary_entries = boundary;
    cert.elements_evaluated = elements.len();
    cert.partial = partial;
    Ok(cert)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// `exp(slope)` of `log r_k` against `k` over the tail.
    pub rate: f64,
    /// Coefficient of determination of the tail fit.
    pub fit_quality: f64,
    pub tail_len: usize,
}

pub const DEFAULT_TAIL_FRACTION: f64 = 0.5;
pub const MIN_TAIL_POINTS: usize = 5;

/// Least-squares linear-rate fit on the final `tail_fraction` of `residuals`.
pub fn fit_linear_rate(residuals: &[f64], tail_fraction: f64) -> Result<RateFit> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::param("tail_fraction", "must lie in (0, 1]"));
    }
    let n = residuals.len();
    let tail_len = ((n as f64) * tail_fraction).ceil() as usize;
    if tail_len < MIN_TAIL_POINTS {
        return Err(Error::param(
            "residuals",
            format!("tail holds {tail_len} points, need at least {MIN_TAIL_POINTS}"),
        ));
    }
    let start = n - tail_len;
    let tail = &residuals[start..];
    if let Some(bad) = tail.iter().find(|&&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::param(
            "residuals",
            format!("tail contains nonpositive value {bad}"),
        ));
    }
    let xs: Vec<f64> = (start..n).map(|k| k as f64).collect();
    let ys: Vec<f64> = tail.iter().map(|r| r.ln()).collect();
    let m = tail_len as f64;
    let xm = xs.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let syy: f64 = ys.iter().map(|y| (y - ym).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - ym - slope * (x - xm)).powi(2))
        .sum();
    let fit_quality = if syy <= f64::EPSILON * m * (1.0 + ym * ym) {
        1.0
    } else {
        1.0 - ss_res / syy
    };
    Ok(RateFit {
        rate: slope.exp(),
        fit_quality,
        tail_len,
    })
}
