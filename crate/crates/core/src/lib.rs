//! Inexact Riemannian augmented Lagrangian method (RALM) for composite problems
//!
//! ```text
//! min  f(x) + θ(g(x))   s.t.  x ∈ M
//! ```
//!
//! where `M` is an embedded matrix manifold (Euclidean space, Stiefel, fixed-rank),
//! `f` and `g` are smooth and `θ` is a closed proper convex function with a cheap
//! proximal map. The subproblems are solved by a globalized semismooth Newton
//! method working on tangent spaces, and the [`certify`] module checks the
//! second-order sufficient condition and fits convergence rates after a run.
//!
//! Module map:
//! - [`geometry`]: points, tangent vectors, projections, retractions, gradients, Hessians.
//! - [`convex`]: proximal toolkit for `θ` (ℓ1 ships).
//! - [`lagrangian`]: augmented Lagrangian value, gradient, generalized Hessian, KKT residual.
//! - [`newton`]: tangent-space CG and the globalized semismooth Newton solver.
//! - [`ralm`]: outer multiplier loop with inexact stopping rules and telemetry.
//! - [`certify`]: M-SSOSC and generalized-Hessian certificates, linear-rate fits.
//! - [`bench`]: compressed-modes and robust-matrix-completion builders, CSV/Matrix Market IO.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod certify;
pub mod convex;
mod error;
pub mod geometry;
pub mod lagrangian;
pub mod newton;
pub mod ralm;

pub use error::{Error, Result};

/// Dense real matrix used for ambient coordinates and multipliers.
pub type Mat = nalgebra::DMatrix<f64>;
