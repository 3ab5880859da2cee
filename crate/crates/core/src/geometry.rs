//! Embedded-submanifold geometry for Euclidean space, the Stiefel manifold
//! `St(n,r) = {X ∈ ℝⁿˣʳ : XᵀX = I_r}` and the fixed-rank manifold
//! `Fr(m,n,r) = {X ∈ ℝᵐˣⁿ : rank X = r}`.
//!
//! All three carry the metric induced by the ambient Frobenius inner product,
//! so Riemannian gradients are tangent projections of Euclidean gradients and
//! Riemannian Hessians are projected Euclidean Hessians plus a curvature
//! (Weingarten) correction. The retractions are second-order: the polar
//! factor on Stiefel and the rank-r truncated SVD on Fr(m,n,r).
//!
//! Tangent vectors are stored in ambient coordinates. Fixed-rank tangent
//! vectors can be converted to and from the factored form
//! `ξ = U M Vᵀ + U_p Vᵀ + U V_pᵀ` with `UᵀU_p = 0`, `VᵀV_p = 0`.

use std::sync::Arc;

use nalgebra::{DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Mat, Result};

/// Orthonormality tolerance accepted for user-supplied points.
pub const POINT_TOL: f64 = 1e-10;
/// Smallest admissible r-th singular value after a fixed-rank retraction.
pub const RANK_DROP_TOL: f64 = 1e-12;
/// Smallest admissible singular value in the fixed-rank curvature term.
pub const SIGMA_MIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Manifold {
    Euclidean { rows: usize, cols: usize },
    Stiefel { n: usize, r: usize },
    FixedRank { m: usize, n: usize, r: usize },
}

impl Manifold {
    pub fn ambient_shape(&self) -> (usize, usize) {
        match *self {
            Manifold::Euclidean { rows, cols } => (rows, cols),
            Manifold::Stiefel { n, r } => (n, r),
            Manifold::FixedRank { m, n, .. } => (m, n),
        }
    }

    /// Intrinsic dimension.
    pub fn dimension(&self) -> usize {
        match *self {
            Manifold::Euclidean { rows, cols } => rows * cols,
            Manifold::Stiefel { n, r } => n * r - r * (r + 1) / 2,
            Manifold::FixedRank { m, n, r } => (m + n - r) * r,
        }
    }

    fn check_shape(&self, context: &'static str, y: &Mat) -> Result<()> {
        let expected = self.ambient_shape();
        if y.shape() != expected {
            return Err(Error::ShapeMismatch {
                context,
                expected,
                found: y.shape(),
            });
        }
        Ok(())
    }

    /// Seeded random point: QR of a Gaussian matrix for Stiefel, random
    /// orthonormal factors with singular values in `[1, 2]` for fixed-rank.
    pub fn random_point(&self, seed: u64) -> ManifoldPoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match *self {
            Manifold::Euclidean { rows, cols } => {
                ManifoldPoint::euclidean(gaussian(&mut rng, rows, cols))
            }
            Manifold::Stiefel { n, r } => {
                let q = gaussian(&mut rng, n, r).qr().q();
                ManifoldPoint {
                    manifold: *self,
                    ambient: q,
                    factors: None,
                }
            }
            Manifold::FixedRank { m, n, r } => {
                let u = gaussian(&mut rng, m, r).qr().q();
                let v = gaussian(&mut rng, n, r).qr().q();
                let mut s: Vec<f64> = (0..r)
                    .map(|_| 1.0 + rand::Rng::random::<f64>(&mut rng))
                    .collect();
                s.sort_by(|a, b| b.total_cmp(a));
                ManifoldPoint::from_factors_unchecked(u, DVector::from_vec(s), v)
            }
        }
    }
}

pub(crate) fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// SVD factors of a fixed-rank point: `X = U diag(σ) Vᵀ`, σ strictly
/// positive and nonincreasing.
#[derive(Debug, Clone)]
pub struct Factors {
    pub u: Mat,
    pub sigma: DVector<f64>,
    pub v: Mat,
}

#[derive(Debug, Clone)]
pub struct ManifoldPoint {
    manifold: Manifold,
    ambient: Mat,
    factors: Option<Factors>,
}

impl ManifoldPoint {
    pub fn euclidean(x: Mat) -> Self {
        let (rows, cols) = x.shape();
        ManifoldPoint {
            manifold: Manifold::Euclidean { rows, cols },
            ambient: x,
            factors: None,
        }
    }

    /// Accepts `x` if `‖XᵀX − I‖_∞ ≤ POINT_TOL`.
    pub fn stiefel(x: Mat) -> Result<Self> {
        let (n, r) = x.shape();
        if r == 0 || n < r {
            return Err(Error::Invariant(format!(
                "Stiefel shape {n}x{r} needs n >= r >= 1"
            )));
        }
        let err = orthonormality_error(&x);
        if err > POINT_TOL {
            return Err(Error::Invariant(format!(
                "Stiefel point has ||X^T X - I||_inf = {err:e}"
            )));
        }
        Ok(ManifoldPoint {
            manifold: Manifold::Stiefel { n, r },
            ambient: x,
            factors: None,
        })
    }

    /// Polar factor of a full-column-rank matrix.
    pub fn stiefel_from_matrix(a: &Mat) -> Result<Self> {
        let (n, r) = a.shape();
        if r == 0 || n < r {
            return Err(Error::Invariant(format!(
                "Stiefel shape {n}x{r} needs n >= r >= 1"
            )));
        }
        let ambient = polar(a)?;
        Ok(ManifoldPoint {
            manifold: Manifold::Stiefel { n, r },
            ambient,
            factors: None,
        })
    }

    /// Fixed-rank point from factors. Columns are reordered so that σ is
    /// nonincreasing.
    pub fn fixed_rank(u: Mat, sigma: DVector<f64>, v: Mat) -> Result<Self> {
        let r = sigma.len();
        if r == 0 || u.ncols() != r || v.ncols() != r || u.nrows() < r || v.nrows() < r {
            return Err(Error::Invariant(format!(
                "fixed-rank factors have incompatible shapes U {:?}, sigma {}, V {:?}",
                u.shape(),
                r,
                v.shape()
            )));
        }
        for (name, f) in [("U", &u), ("V", &v)] {
            let err = orthonormality_error(f);
            if err > POINT_TOL {
                return Err(Error::Invariant(format!(
                    "fixed-rank factor {name} has ||F^T F - I||_inf = {err:e}"
                )));
            }
        }
        if sigma.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Invariant(
                "fixed-rank singular values must be positive".into(),
            ));
        }
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
        let u = Mat::from_fn(u.nrows(), r, |i, j| u[(i, order[j])]);
        let v = Mat::from_fn(v.nrows(), r, |i, j| v[(i, order[j])]);
        let sigma = DVector::from_fn(r, |j, _| sigma[order[j]]);
        Ok(Self::from_factors_unchecked(u, sigma, v))
    }

    /// Rank-r truncated SVD of `a`.
    pub fn fixed_rank_from_matrix(a: &Mat, r: usize) -> Result<Self> {
        let (u, s, v) = sorted_svd(a)?;
        if r == 0 || r > s.len() {
            return Err(Error::param(
                "r",
                format!("rank {r} not in 1..={}", s.len()),
            ));
        }
        if s[r - 1] <= RANK_DROP_TOL {
            return Err(Error::RankDrop { sigma_r: s[r - 1] });
        }
        Ok(Self::from_factors_unchecked(
            u.columns(0, r).into_owned(),
            s.rows(0, r).into_owned(),
            v.columns(0, r).into_owned(),
        ))
    }

    fn from_factors_unchecked(u: Mat, sigma: DVector<f64>, v: Mat) -> Self {
        let ambient = &u * Mat::from_diagonal(&sigma) * v.transpose();
        ManifoldPoint {
            manifold: Manifold::FixedRank {
                m: u.nrows(),
                n: v.nrows(),
                r: sigma.len(),
            },
            ambient,
            factors: Some(Factors { u, sigma, v }),
        }
    }

    /// Builds a point on `manifold` from ambient coordinates, validating the
    /// manifold's invariants (orthonormal columns, exact rank r).
    pub fn from_ambient(manifold: Manifold, a: Mat) -> Result<Self> {
        manifold.check_shape("ManifoldPoint::from_ambient", &a)?;
        match manifold {
            Manifold::Euclidean { .. } => Ok(Self::euclidean(a)),
            Manifold::Stiefel { .. } => Self::stiefel(a),
            Manifold::FixedRank { r, .. } => {
                let (_, s, _) = sorted_svd(&a)?;
                let scale = s.get(0).copied().unwrap_or(0.0).max(1.0);
                if let Some(&tail) = s.get(r) {
                    if tail > POINT_TOL * scale {
                        return Err(Error::Invariant(format!(
                            "matrix has rank > {r}: sigma_{} = {tail:e}",
                            r + 1
                        )));
                    }
                }
                Self::fixed_rank_from_matrix(&a, r)
            }
        }
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn ambient(&self) -> &Mat {
        &self.ambient
    }

    pub fn factors(&self) -> Option<&Factors> {
        self.factors.as_ref()
    }

    pub fn shared(self) -> Arc<Self> {
        Arc::new(self)
    }
}

fn orthonormality_error(x: &Mat) -> f64 {
    let g = x.transpose() * x;
    let r = g.nrows();
    (g - Mat::identity(r, r)).amax()
}

/// Thin SVD with singular values sorted in nonincreasing order.
/// Thin SVD with singular values in nonincreasing order. Uses faer: the
/// nalgebra SVD loses accuracy on nearly rank-deficient inputs, which is
/// exactly what the fixed-rank retraction feeds it.
pub(crate) fn sorted_svd(a: &Mat) -> Result<(Mat, DVector<f64>, Mat)> {
    let (m, n) = a.shape();
    let f = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let svd = f
        .thin_svd()
        .map_err(|e| Error::NonFinite(format!("SVD did not converge: {e:?}")))?;
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    let k = m.min(n);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let u_sorted = Mat::from_fn(m, k, |i, j| u[(i, order[j])]);
    let v_sorted = Mat::from_fn(n, k, |i, j| v[(i, order[j])]);
    let s_sorted = DVector::from_fn(k, |j, _| s[order[j]]);
    Ok((u_sorted, s_sorted, v_sorted))
}

fn polar(a: &Mat) -> Result<Mat> {
    let (u, s, v) = sorted_svd(a)?;
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin > RANK_DROP_TOL) {
        return Err(Error::RankDrop { sigma_r: smin });
    }
    Ok(u * v.transpose())
}

fn sym(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Factored coordinates of a fixed-rank tangent vector.
#[derive(Debug, Clone)]
pub struct FactoredTangent {
    pub m: Mat,
    pub u_p: Mat,
    pub v_p: Mat,
}

#[derive(Debug, Clone)]
pub struct TangentVector {
    base: Arc<ManifoldPoint>,
    coords: Mat,
}

impl TangentVector {
    pub fn zero(base: &Arc<ManifoldPoint>) -> Self {
        let (r, c) = base.manifold.ambient_shape();
        TangentVector {
            base: Arc::clone(base),
            coords: Mat::zeros(r, c),
        }
    }

    /// Wraps coordinates already known to be tangent at `base`.
    pub(crate) fn from_tangent_coords(base: &Arc<ManifoldPoint>, coords: Mat) -> Self {
        TangentVector {
            base: Arc::clone(base),
            coords,
        }
    }

    /// Reconstructs `U M Vᵀ + U_p Vᵀ + U V_pᵀ` at a fixed-rank base point.
    pub fn from_factored(base: &Arc<ManifoldPoint>, f: &FactoredTangent) -> Result<Self> {
        let fac = base
            .factors
            .as_ref()
            .ok_or_else(|| Error::Invariant("factored tangent needs a fixed-rank base".into()))?;
        let coords = &fac.u * &f.m * fac.v.transpose()
            + &f.u_p * fac.v.transpose()
            + &fac.u * f.v_p.transpose();
        Ok(Self::from_tangent_coords(base, coords))
    }

    pub fn base(&self) -> &Arc<ManifoldPoint> {
        &self.base
    }

    pub fn coords(&self) -> &Mat {
        &self.coords
    }

    pub fn into_coords(self) -> Mat {
        self.coords
    }

    /// Factored form `(M, U_p, V_p)` for fixed-rank bases, `None` otherwise.
    pub fn factored(&self) -> Option<FactoredTangent> {
        let fac = self.base.factors.as_ref()?;
        let zv = &self.coords * &fac.v;
        let m = fac.u.transpose() * &zv;
        let u_p = &zv - &fac.u * &m;
        let v_p = self.coords.transpose() * &fac.u - &fac.v * m.transpose();
        Some(FactoredTangent { m, u_p, v_p })
    }

    pub fn same_base(&self, other: &TangentVector) -> bool {
        same_point(&self.base, &other.base)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::from_tangent_coords(&self.base, &self.coords * a)
    }

    /// `self + a·other`.
    pub fn plus_scaled(&self, a: f64, other: &TangentVector) -> Self {
        debug_assert!(self.same_base(other));
        Self::from_tangent_coords(&self.base, &self.coords + &other.coords * a)
    }

    pub fn inner(&self, other: &TangentVector) -> Result<f64> {
        inner(self, other)
    }

    pub fn norm(&self) -> f64 {
        self.coords.norm()
    }
}

fn same_point(a: &Arc<ManifoldPoint>, b: &Arc<ManifoldPoint>) -> bool {
    Arc::ptr_eq(a, b) || (a.manifold == b.manifold && a.ambient == b.ambient)
}

/// Frobenius inner product of two tangent vectors at the same base point.
pub fn inner(a: &TangentVector, b: &TangentVector) -> Result<f64> {
    if !a.same_base(b) {
        return Err(Error::BaseMismatch);
    }
    Ok(a.coords.dot(&b.coords))
}

pub fn norm(a: &TangentVector) -> f64 {
    a.norm()
}

/// Orthogonal projection of an ambient matrix onto `T_X M`.
///
/// Stiefel: `Y − X sym(XᵀY)`. Fixed-rank: `P_U Y P_V + P_U^⊥ Y P_V + P_U Y P_V^⊥`.
pub fn tangent_project(x: &Arc<ManifoldPoint>, y: &Mat) -> Result<TangentVector> {
    x.manifold.check_shape("tangent_project", y)?;
    let coords = match x.manifold {
        Manifold::Euclidean { .. } => y.clone(),
        Manifold::Stiefel { .. } => {
            let xt_y = x.ambient.transpose() * y;
            y - &x.ambient * sym(&xt_y)
        }
        Manifold::FixedRank { .. } => {
            let f = x
                .factors
                .as_ref()
                .expect("fixed-rank point carries factors");
            let ut_y = f.u.transpose() * y;
            let yv = y * &f.v;
            let m = &ut_y * &f.v;
            &f.u * ut_y + (yv - &f.u * m) * f.v.transpose()
        }
    };
    Ok(TangentVector::from_tangent_coords(x, coords))
}

/// Second-order retraction. Stiefel: polar factor of `X + Ξ`. Fixed-rank:
/// rank-r truncated SVD of `X + Ξ`, failing with [`Error::RankDrop`] when
/// `σ_r(X + Ξ) ≤ RANK_DROP_TOL`.
pub fn retract(x: &Arc<ManifoldPoint>, xi: &TangentVector) -> Result<ManifoldPoint> {
    if !same_point(x, &xi.base) {
        return Err(Error::BaseMismatch);
    }
    if xi.coords.iter().all(|&v| v == 0.0) {
        return Ok((**x).clone());
    }
    let moved = &x.ambient + &xi.coords;
    match x.manifold {
        Manifold::Euclidean { .. } => Ok(ManifoldPoint::euclidean(moved)),
        Manifold::Stiefel { n, r } => Ok(ManifoldPoint {
            manifold: Manifold::Stiefel { n, r },
            ambient: polar(&moved)?,
            factors: None,
        }),
        Manifold::FixedRank { r, .. } => ManifoldPoint::fixed_rank_from_matrix(&moved, r),
    }
}

/// Riemannian gradient of a function with Euclidean gradient `egrad`.
pub fn riem_grad(x: &Arc<ManifoldPoint>, egrad: &Mat) -> Result<TangentVector> {
    tangent_project(x, egrad)
}

/// Riemannian Hessian-vector product from the Euclidean gradient `egrad` and
/// the Euclidean Hessian applied to `Ξ` (`ehess_vec`).
///
/// - Stiefel: `Π_X(∇²f[Ξ] − Ξ sym(Xᵀ∇f))`.
/// - Fixed-rank: `Π_X(∇²f[Ξ]) + P_U^⊥ ∇f V_p Σ⁻¹ Vᵀ + U Σ⁻¹ U_pᵀ ∇f P_V^⊥`
///   with `U_p = P_U^⊥ Ξ V`, `V_p = P_V^⊥ Ξᵀ U`.
pub fn riem_hess_vec(
    x: &Arc<ManifoldPoint>,
    egrad: &Mat,
    ehess_vec: &Mat,
    xi: &TangentVector,
) -> Result<TangentVector> {
    x.manifold.check_shape("riem_hess_vec (egrad)", egrad)?;
    x.manifold
        .check_shape("riem_hess_vec (ehess_vec)", ehess_vec)?;
    if !same_point(x, &xi.base) {
        return Err(Error::BaseMismatch);
    }
    match x.manifold {
        Manifold::Euclidean { .. } => Ok(TangentVector::from_tangent_coords(x, ehess_vec.clone())),
        Manifold::Stiefel { .. } => {
            let w = x.ambient.transpose() * egrad;
            let z = ehess_vec - &xi.coords * sym(&w);
            tangent_project(x, &z)
        }
        Manifold::FixedRank { .. } => {
            let f = x
                .factors
                .as_ref()
                .expect("fixed-rank point carries factors");
            let smin = f.sigma.min();
            if smin < SIGMA_MIN_TOL {
                return Err(Error::IllConditioned { sigma_min: smin });
            }
            let sigma_inv = Mat::from_diagonal(&f.sigma.map(|s| 1.0 / s));
            let ft = xi.factored().expect("fixed-rank tangent");
            let base = tangent_project(x, ehess_vec)?;

            // P_U^⊥ Z V_p Σ⁻¹ Vᵀ
            let zvp = egrad * &ft.v_p;
            let zvp_perp = &zvp - &f.u * (f.u.transpose() * &zvp);
            let left = zvp_perp * &sigma_inv * f.v.transpose();

            // U Σ⁻¹ U_pᵀ Z P_V^⊥
            let upz = ft.u_p.transpose() * egrad;
            let upz_perp = &upz - (&upz * &f.v) * f.v.transpose();
            let right = &f.u * &sigma_inv * upz_perp;

            Ok(TangentVector::from_tangent_coords(
                x,
                base.coords + left + right,
            ))
        }
    }
}

/// Unit-norm tangent vector drawn from a seeded Gaussian, projected and
/// normalized.
pub fn random_tangent(x: &Arc<ManifoldPoint>, seed: u64) -> Result<TangentVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, c) = x.manifold.ambient_shape();
    for _ in 0..8 {
        let t = tangent_project(x, &gaussian(&mut rng, r, c))?;
        let n = t.norm();
        if n > 1e-8 {
            return Ok(t.scaled(1.0 / n));
        }
    }
    Err(Error::Invariant("tangent space is trivial".into()))
}

/// Orthonormal basis of the orthogonal complement of `range(U)` for a
/// matrix `U` with orthonormal columns.
pub fn orthonormal_complement(u: &Mat) -> Mat {
    let n = u.nrows();
    let k = u.ncols();
    if k >= n {
        return Mat::zeros(n, 0);
    }
    let p = Mat::identity(n, n) - u * u.transpose();
    let eig = SymmetricEigen::new(p);
    let cols: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    Mat::from_fn(n, cols.len(), |i, j| eig.eigenvectors[(i, cols[j])])
}

/// Orthonormal basis of `T_X M` built from the block structure of the
/// tangent space, so no numerical rank decisions are involved.
pub fn tangent_basis(x: &Arc<ManifoldPoint>) -> Vec<TangentVector> {
    let (rows, cols) = x.manifold.ambient_shape();
    let mut basis = Vec::with_capacity(x.manifold.dimension());
    let unit = |i: usize, j: usize, r: usize, c: usize| {
        let mut e = Mat::zeros(r, c);
        e[(i, j)] = 1.0;
        e
    };
    match x.manifold {
        Manifold::Euclidean { .. } => {
            for j in 0..cols {
                for i in 0..rows {
                    basis.push(TangentVector::from_tangent_coords(
                        x,
                        unit(i, j, rows, cols),
                    ));
                }
            }
        }
        Manifold::Stiefel { n, r } => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            for i in 0..r {
                for j in (i + 1)..r {
                    let mut omega = Mat::zeros(r, r);
                    omega[(i, j)] = s;
                    omega[(j, i)] = -s;
                    basis.push(TangentVector::from_tangent_coords(x, &x.ambient * omega));
                }
            }
            let perp = orthonormal_complement(&x.ambient);
            for j in 0..r {
                for k in 0..(n - r) {
                    basis.push(TangentVector::from_tangent_coords(
                        x,
                        perp.column(k) * unit(0, j, 1, r),
                    ));
                }
            }
        }
        Manifold::FixedRank { r, .. } => {
            let f = x
                .factors
                .as_ref()
                .expect("fixed-rank point carries factors");
            let u_perp = orthonormal_complement(&f.u);
            let v_perp = orthonormal_complement(&f.v);
            for i in 0..r {
                for j in 0..r {
                    basis.push(TangentVector::from_tangent_coords(
                        x,
                        f.u.column(i) * f.v.column(j).transpose(),
                    ));
                }
            }
            for k in 0..u_perp.ncols() {
                for j in 0..r {
                    basis.push(TangentVector::from_tangent_coords(
                        x,
                        u_perp.column(k) * f.v.column(j).transpose(),
                    ));
                }
            }
            for i in 0..r {
                for l in 0..v_perp.ncols() {
                    basis.push(TangentVector::from_tangent_coords(
                        x,
                        f.u.column(i) * v_perp.column(l).transpose(),
                    ));
                }
            }
        }
    }
    basis
}

/// Frobenius distance between ambient representations.
pub fn ambient_distance(a: &ManifoldPoint, b: &ManifoldPoint) -> f64 {
    (&a.ambient - &b.ambient).norm()
}
