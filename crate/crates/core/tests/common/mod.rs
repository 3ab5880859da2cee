#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::SymmetricEigen;
use ralmkit::bench::{build_cm, cm_reference_pair, IdentityMap, RmcGenerator, RmcInstance};
use ralmkit::convex::L1Norm;
use ralmkit::geometry::{Manifold, ManifoldPoint, TangentVector};
use ralmkit::lagrangian::{ProblemSpec, SmoothObjective};
use ralmkit::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    })
}

/// `f(X) = ½⟨X, QX⟩ + ⟨C, X⟩` with `Q` symmetric acting on columns.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub q: Mat,
    pub c: Mat,
}

impl SmoothObjective for Quadratic {
    fn value(&self, x: &Mat) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x)
    }
    fn gradient(&self, x: &Mat) -> Mat {
        &self.q * x + &self.c
    }
    fn hess_vec(&self, _: &Mat, v: &Mat) -> Mat {
        &self.q * v
    }
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Mat {
    let a = gaussian(rng, n, n);
    &a * a.transpose() / n as f64 + Mat::identity(n, n) * shift
}

pub fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let a = gaussian(rng, n, n);
    (&a + a.transpose()) * 0.5
}

pub fn lambda_min(m: &Mat) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Problem with a quadratic objective, `g = id` and `θ = μ‖·‖₁` on any manifold.
pub fn quadratic_problem(manifold: Manifold, q: Mat, c: Mat, mu: f64) -> ProblemSpec {
    let (rows, cols) = manifold.ambient_shape();
    ProblemSpec {
        manifold,
        objective: Arc::new(Quadratic { q, c }),
        constraint: Arc::new(IdentityMap { rows, cols }),
        theta: Arc::new(L1Norm::new(mu).unwrap()),
    }
}

pub fn cm4(mu: f64) -> (ProblemSpec, Arc<ManifoldPoint>, Mat) {
    let p = build_cm(4, 2, mu, 2.0).unwrap();
    let (x, y) = cm_reference_pair(mu);
    (p, x.shared(), y)
}

pub fn rmc_small(seed: u64) -> RmcInstance {
    let data = RmcGenerator {
        m: 7,
        n: 6,
        r: 2,
        sampling: 0.9,
        outlier_density: 0.1,
        outlier_magnitude: 2.0,
    }
    .generate(seed)
    .unwrap();
    RmcInstance::new(data.a, data.mask, 2, 1.0).unwrap()
}

/// Three problems, one per manifold kind, used by the derivative oracles.
pub fn oracle_problems(seed: u64) -> Vec<(&'static str, ProblemSpec)> {
    let mut r = rng(seed);
    let eu = quadratic_problem(
        Manifold::Euclidean { rows: 5, cols: 2 },
        random_spd(&mut r, 5, 0.5),
        gaussian(&mut r, 5, 2),
        0.3,
    );
    let st = build_cm(8, 3, 0.2, 4.0).unwrap();
    let fr = rmc_small(seed).problem().unwrap();
    vec![("euclidean", eu), ("stiefel", st), ("fixed-rank", fr)]
}

pub fn ambient_of(t: &TangentVector) -> Mat {
    t.coords().clone()
}

/// Relative error `‖a − b‖ / max(‖b‖, floor)`.
pub fn rel_err(a: &Mat, b: &Mat, floor: f64) -> f64 {
    (a - b).norm() / b.norm().max(floor)
}
