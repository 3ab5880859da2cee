use nalgebra::dmatrix;
use proptest::prelude::*;
use ralmkit::convex::*;
use ralmkit::Mat;

/// Brute-force `min_u θ(u) + (u − p)²/(2t)`: grid search around `p`, then
/// ternary refinement inside the winning cell (the objective is convex).
fn grid_prox(mu: f64, t: f64, p: f64) -> (f64, f64) {
    let obj = |u: f64| mu * u.abs() + (u - p).powi(2) / (2.0 * t);
    let n = 100_001;
    let lo = p - 2.0 - t * mu;
    let hi = p + 2.0 + t * mu;
    let step = (hi - lo) / (n - 1) as f64;
    let mut best = lo;
    for i in 0..n {
        let u = lo + step * i as f64;
        if obj(u) < obj(best) {
            best = u;
        }
    }
    let (mut a, mut b) = (best - step, best + step);
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if obj(m1) < obj(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let u = 0.5 * (a + b);
    (obj(u), u)
}

#[test]
fn prox_and_envelope_match_grid_oracle() {
    for &(mu, t, p) in &[
        (1.0, 1.0, 2.0),
        (1.0, 1.0, 0.5),
        (0.3, 2.0, -1.7),
        (2.5, 0.1, 0.1),
        (0.8, 0.5, -0.4),
    ] {
        let th = L1Norm::new(mu).unwrap();
        let (val, arg) = grid_prox(mu, t, p);
        let prox = th.prox(t, &dmatrix![p]).unwrap()[(0, 0)];
        assert!(
            (prox - arg).abs() <= 1e-6,
            "prox at {p}: {prox} vs grid {arg}"
        );
        let env = moreau_env(&th, 1.0 / t, &dmatrix![p]).unwrap();
        assert!((env - val).abs() <= 1e-6, "env at {p}: {env} vs grid {val}");
    }
}

#[test]
fn envelope_gradient_matches_central_differences() {
    let th = L1Norm::new(0.7).unwrap();
    for &p in &[-2.0, -0.3, 0.1, 0.69, 1.3] {
        let rho = 1.0;
        let h = 1e-6;
        let fd = (moreau_env(&th, rho, &dmatrix![p + h]).unwrap()
            - moreau_env(&th, rho, &dmatrix![p - h]).unwrap())
            / (2.0 * h);
        let g = moreau_grad(&th, rho, &dmatrix![p]).unwrap()[(0, 0)];
        assert!((fd - g).abs() < 1e-8, "p = {p}");
    }
}

#[test]
fn jacobian_matches_prox_differences_off_kinks() {
    let th = L1Norm::new(1.0).unwrap();
    let p = dmatrix![0.3, -1.4; 2.2, -0.6];
    let t = 0.8;
    let j = th.prox_jacobian(t, &p, BoundaryConvention::Zero).unwrap();
    let h = 1e-7;
    for i in 0..2 {
        for k in 0..2 {
            let mut e = Mat::zeros(2, 2);
            e[(i, k)] = h;
            let d = (th.prox(t, &(&p + &e)).unwrap() - th.prox(t, &(&p - &e)).unwrap()) / (2.0 * h);
            assert!((d[(i, k)] - j.mask[(i, k)]).abs() < 1e-6);
        }
    }
}

#[test]
fn kink_conventions_bracket_the_one_sided_slopes() {
    let th = L1Norm::new(1.0).unwrap();
    let p = dmatrix![1.0];
    let zero = th.prox_jacobian(1.0, &p, BoundaryConvention::Zero).unwrap();
    let one = th.prox_jacobian(1.0, &p, BoundaryConvention::One).unwrap();
    assert_eq!(zero.boundary, vec![(0, 0)]);
    assert_eq!(zero.mask[(0, 0)], 0.0);
    assert_eq!(one.mask[(0, 0)], 1.0);
    let h = 1e-6;
    let right = (th.prox(1.0, &dmatrix![1.0 + h]).unwrap()[(0, 0)] - 0.0) / h;
    let left = (0.0 - th.prox(1.0, &dmatrix![1.0 - h]).unwrap()[(0, 0)]) / h;
    assert!((right - 1.0).abs() < 1e-9 && left.abs() < 1e-9);
}

#[test]
fn enumeration_cap_is_respected() {
    let th = L1Norm::new(1.0).unwrap();
    let p = Mat::from_element(1, ENUMERATION_CAP + 1, 1.0);
    let j = th.prox_jacobian(1.0, &p, BoundaryConvention::Zero).unwrap();
    assert!(j.extremes(ENUMERATION_CAP).is_none());
    let p = Mat::from_element(1, 3, -1.0);
    let j = th.prox_jacobian(1.0, &p, BoundaryConvention::One).unwrap();
    assert_eq!(j.extremes(ENUMERATION_CAP).unwrap().len(), 8);
}

proptest! {
    #[test]
    fn moreau_decomposition(mu in 0.01f64..5.0, t in 0.01f64..10.0, v in prop::collection::vec(-10.0f64..10.0, 1..12)) {
        // p = prox_{tθ}(p) + t·prox_{θ*/t}(p/t); for ℓ1 the second prox is a clip to [−μ, μ].
        let th = L1Norm::new(mu).unwrap();
        let p = Mat::from_row_slice(1, v.len(), &v);
        let prox = th.prox(t, &p).unwrap();
        let clip = p.map(|x| (x / t).clamp(-mu, mu));
        prop_assert!((&prox + clip * t - &p).norm() <= 1e-12 * (1.0 + p.norm()));
    }

    #[test]
    fn envelope_bounds(mu in 0.01f64..5.0, rho in 0.01f64..100.0, v in prop::collection::vec(-10.0f64..10.0, 1..12)) {
        let th = L1Norm::new(mu).unwrap();
        let p = Mat::from_row_slice(1, v.len(), &v);
        let m = moreau(&th, rho, &p).unwrap();
        // 0 ≤ env ≤ θ, gradient in the dual box, prox is a subgradient pair.
        prop_assert!(m.value >= -1e-15);
        prop_assert!(m.value <= th.value(&p) + 1e-12);
        prop_assert!(m.grad.amax() <= mu * (1.0 + 1e-12));
        prop_assert!(th.in_subdifferential(&m.prox, &m.grad, 1e-9));
    }

    #[test]
    fn prox_is_firmly_nonexpansive(mu in 0.01f64..5.0, t in 0.01f64..10.0, a in prop::collection::vec(-10.0f64..10.0, 6), b in prop::collection::vec(-10.0f64..10.0, 6)) {
        let th = L1Norm::new(mu).unwrap();
        let pa = Mat::from_row_slice(1, 6, &a);
        let pb = Mat::from_row_slice(1, 6, &b);
        let qa = th.prox(t, &pa).unwrap();
        let qb = th.prox(t, &pb).unwrap();
        let dq = &qa - &qb;
        prop_assert!(dq.norm_squared() <= dq.dot(&(&pa - &pb)) + 1e-12);
    }
}
