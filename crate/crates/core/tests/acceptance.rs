//! One test per acceptance criterion. Each writes a single
//! `criterion N: PASS|FAIL ...` line to stdout (uncaptured) and then asserts.

mod common;

use std::io::Write;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use common::{cm4, gaussian, oracle_problems, rel_err, rmc_small, rng};
use ralmkit::bench::{rmc_reference_fixture, CmInstance};
use ralmkit::certify::{
    critical_cone_basis, fit_linear_rate, genhess_min_eig, mssosc_certificate, RateFit, Verdict,
    CERT_TOL, DEFAULT_TAIL_FRACTION,
};
use ralmkit::convex::{moreau, BoundaryConvention, L1Norm, ProxFunction};
use ralmkit::geometry::{
    ambient_distance, random_tangent, retract, tangent_project, ManifoldPoint, TangentVector,
};
use ralmkit::lagrangian::{auglag_rgrad, auglag_value, kkt_residual, AugLagEval, ProblemSpec};
use ralmkit::newton::{ssn_minimize, NewtonConfig, NewtonStatus};
use ralmkit::ralm::{ralm_solve, RalmConfig, RalmOutcome, RalmStatus};
use ralmkit::Mat;
use rand::Rng;

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn report(n: usize, pass: bool, elapsed: Duration, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "criterion {n}: {verdict} ({:.2} s) {detail}",
        elapsed.as_secs_f64()
    )
    .unwrap();
    out.flush().unwrap();
}

fn perturbed(x: &Arc<ManifoldPoint>, scale: f64, seed: u64) -> Arc<ManifoldPoint> {
    retract(x, &random_tangent(x, seed).unwrap().scaled(scale))
        .unwrap()
        .shared()
}

#[test]
fn criterion_1_cm4_certificate() {
    let t = Instant::now();
    let mu = 0.8;
    let (p, x, y) = cm4(mu);
    let residual = kkt_residual(&p, &x, &y).unwrap();
    let cert = mssosc_certificate(&p, &x, &y).unwrap();
    let eig = cert.min_eigenvalue.unwrap_or(f64::NAN);
    let target = 10.0 - mu * SQRT2;
    let elapsed = t.elapsed();
    let pass = residual <= 1e-10
        && cert.dimension == 2
        && (eig - target).abs() <= 1e-8
        && elapsed < Duration::from_secs(1);
    report(
        1,
        pass,
        elapsed,
        &format!(
            "residual {residual:.2e}, cone dim {}, min eig {eig:.10} vs target {target:.10}",
            cert.dimension
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_mssosc_threshold_sweep() {
    let t = Instant::now();
    let threshold = 5.0 * SQRT2;
    let mut rows = Vec::new();
    let mut pass = true;
    for mu in [0.4, 4.0, 7.0, 7.2] {
        let (p, x, y) = cm4(mu);
        let cert = mssosc_certificate(&p, &x, &y).unwrap();
        let expected = mu < threshold;
        pass &= cert.verdict.holds() == expected;
        rows.push(format!(
            "mu={mu}: eig {:.4} {:?} (expected {})",
            cert.min_eigenvalue.unwrap(),
            cert.verdict,
            if expected { "holds" } else { "fails" }
        ));
    }
    let elapsed = t.elapsed();
    pass &= elapsed < Duration::from_secs(1);
    report(2, pass, elapsed, &rows.join("; "));
    assert!(pass);
}

#[test]
fn criterion_3_genhess_matches_mssosc() {
    let t = Instant::now();
    let mut rows = Vec::new();
    let mut pass = true;
    for mu in [0.4, 0.8, 4.0, 7.1] {
        let (p, x, y) = cm4(mu);
        let m = mssosc_certificate(&p, &x, &y).unwrap();
        for rho in [10.0, 100.0] {
            let g = genhess_min_eig(&p, rho, &x, &y, true).unwrap();
            let eig = g.min_eigenvalue.unwrap();
            let agree = (eig > CERT_TOL) == m.verdict.holds() && !g.partial;
            pass &= agree;
            if !agree {
                rows.push(format!(
                    "mismatch mu={mu} rho={rho}: genhess {eig:.4}, mssosc {:.4}",
                    m.min_eigenvalue.unwrap()
                ));
            }
        }
    }
    let elapsed = t.elapsed();
    pass &= elapsed < Duration::from_secs(5);
    let detail = if rows.is_empty() {
        "all 8 cells agree".to_string()
    } else {
        rows.join("; ")
    };
    report(3, pass, elapsed, &detail);
    assert!(pass);
}

#[test]
fn criterion_4_rmc_fixture() {
    let t = Instant::now();
    let fx = rmc_reference_fixture([[0.3, -0.4], [0.5, -0.2]]);
    let p = fx.instance.problem().unwrap();
    let x = fx.a_ex.clone().shared();
    let sgn = fx.e_out.map(|v| if v == 0.0 { 0.0 } else { v.signum() });
    let residual = kkt_residual(&p, &x, &sgn).unwrap();
    let cone = critical_cone_basis(&p, &x, &sgn).map(|b| b.dim());

    let start = perturbed(&x, 0.1, 11);
    let cfg = RalmConfig {
        kkt_tol: 1e-9,
        ..RalmConfig::default()
    };
    let out = ralm_solve(&p, &cfg, &start, &Mat::zeros(5, 5)).unwrap();
    let dist = (out.point.ambient() - x.ambient()).norm();
    let final_r = out.records.last().unwrap().kkt_residual;
    let elapsed = t.elapsed();

    let pass = residual <= 1e-10
        && matches!(cone, Ok(0))
        && dist <= 1e-5
        && final_r <= 1e-7
        && elapsed < Duration::from_secs(10);
    report(
        4,
        pass,
        elapsed,
        &format!(
            "residual at (A_ex, sgn E_out) {residual:.2e}, cone dim {cone:?}, solve distance {dist:.2e}, final R {final_r:.2e}"
        ),
    );
    assert!(pass);
}

const CM200_SEEDS: u64 = 5;

struct Cm200Run {
    outcome: RalmOutcome,
    solve_time: Duration,
}

fn cm200_instance() -> (CmInstance, ProblemSpec) {
    let inst = CmInstance::new(200, 5, 1.0, 50.0).unwrap();
    let p = inst.problem().unwrap();
    (inst, p)
}

fn cm200_runs() -> &'static Vec<Cm200Run> {
    static RUNS: OnceLock<Vec<Cm200Run>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let (inst, p) = cm200_instance();
        let cfg = RalmConfig {
            kkt_tol: 1e-10,
            max_outer: 100,
            ..RalmConfig::default()
        };
        (0..CM200_SEEDS)
            .map(|seed| {
                let t = Instant::now();
                let x0 = inst.start(seed).shared();
                let outcome = ralm_solve(&p, &cfg, &x0, &Mat::zeros(200, 5)).unwrap();
                Cm200Run {
                    outcome,
                    solve_time: t.elapsed(),
                }
            })
            .collect()
    })
}

fn residual_fit(out: &RalmOutcome) -> RateFit {
    let res: Vec<f64> = out.records.iter().map(|r| r.kkt_residual).collect();
    fit_linear_rate(&res, DEFAULT_TAIL_FRACTION).unwrap()
}

#[test]
fn criterion_5_linear_rate() {
    let t = Instant::now();
    let (p, xbar, _) = cm4(0.8);
    let cfg = RalmConfig {
        rho0: 1.0,
        gamma: 4.0,
        kkt_tol: 1e-10,
        ..RalmConfig::default()
    };
    let small = ralm_solve(&p, &cfg, &perturbed(&xbar, 0.1, 0), &Mat::zeros(4, 2)).unwrap();
    let small_fit = residual_fit(&small);
    let small_time = t.elapsed();

    let big = &cm200_runs()[0];
    let big_fit = residual_fit(&big.outcome);
    let elapsed = small_time + big.solve_time;

    let ok = |f: &RateFit| f.rate < 1.0 && f.fit_quality >= 0.9;
    let pass = ok(&small_fit) && ok(&big_fit) && elapsed < Duration::from_secs(60);
    report(
        5,
        pass,
        elapsed,
        &format!(
            "n=4: rate {:.3} R2 {:.3} ({} outer); n=200: rate {:.3} R2 {:.3} ({} outer)",
            small_fit.rate,
            small_fit.fit_quality,
            small.records.len() - 1,
            big_fit.rate,
            big_fit.fit_quality,
            big.outcome.records.len() - 1
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_genhess_positive_at_solutions() {
    let (_, p) = cm200_instance();
    let runs = cm200_runs();
    let mut elapsed: Duration = runs.iter().map(|r| r.solve_time).sum();
    let mut eigs = Vec::new();
    let mut pass = true;
    for run in runs {
        let out = &run.outcome;
        let t = Instant::now();
        let rho = out.records.last().unwrap().rho;
        let cert = genhess_min_eig(&p, rho, &out.point, &out.multiplier, true).unwrap();
        elapsed += t.elapsed();
        let eig = cert.min_eigenvalue.unwrap();
        pass &= out.status == RalmStatus::Converged && eig > 0.0;
        eigs.push(format!("{eig:.4}"));
    }
    pass &= elapsed < Duration::from_secs(120);
    report(
        6,
        pass,
        elapsed,
        &format!(
            "min eigenvalues over {CM200_SEEDS} seeds: [{}]",
            eigs.join(", ")
        ),
    );
    assert!(pass);
}

fn lagrangian(p: &ProblemSpec, x: &ManifoldPoint, y: &Mat) -> f64 {
    p.objective.value(x.ambient()) + y.dot(&p.constraint.value(x.ambient()))
}

fn along(x: &Arc<ManifoldPoint>, xi: &TangentVector, t: f64) -> Arc<ManifoldPoint> {
    retract(x, &xi.scaled(t)).unwrap().shared()
}

fn log_slope(ts: &[f64], es: &[f64]) -> f64 {
    let lx: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = es.iter().map(|e| e.max(1e-300).ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn criterion_7_derivative_oracles() {
    let t = Instant::now();
    let rho = 3.0;
    let (mut grad_worst, mut hess_worst, mut slope_worst) = (0.0f64, 0.0f64, f64::INFINITY);
    let mut hess_checked = 0;
    for (_, p) in oracle_problems(41) {
        let (rows, cols) = p.multiplier_shape();
        for k in 0..20u64 {
            let x = p.manifold.random_point(100 + k).shared();
            let y = gaussian(&mut rng(200 + k), rows, cols) * 0.5;
            let xi = random_tangent(&x, 300 + k).unwrap();

            let h = 1e-6;
            let fd = (auglag_value(&p, rho, &along(&x, &xi, h), &y).unwrap()
                - auglag_value(&p, rho, &along(&x, &xi, -h), &y).unwrap())
                / (2.0 * h);
            let g = auglag_rgrad(&p, rho, &x, &y).unwrap();
            grad_worst = grad_worst.max((fd - g.inner(&xi).unwrap()).abs() / g.norm().max(1e-8));

            let here = AugLagEval::new(&p, rho, &x, &y, BoundaryConvention::Zero).unwrap();
            let plus =
                AugLagEval::new(&p, rho, &along(&x, &xi, h), &y, BoundaryConvention::Zero).unwrap();
            let minus = AugLagEval::new(&p, rho, &along(&x, &xi, -h), &y, BoundaryConvention::Zero)
                .unwrap();
            if plus.jacobian.mask == here.jacobian.mask && minus.jacobian.mask == here.jacobian.mask
            {
                let fd = tangent_project(
                    &x,
                    &((plus.rgrad.coords() - minus.rgrad.coords()) / (2.0 * h)),
                )
                .unwrap();
                let hv = here.hess_vec(&xi).unwrap();
                hess_worst = hess_worst.max(rel_err(hv.coords(), fd.coords(), 1e-6));
                hess_checked += 1;
            }

            if k < 5 {
                let f0 = lagrangian(&p, &x, &y);
                let g1 = p.lagrangian_rgrad(&x, &y).unwrap().inner(&xi).unwrap();
                let h2 = p
                    .lagrangian_hess_vec(&x, &y, &xi)
                    .unwrap()
                    .inner(&xi)
                    .unwrap();
                let ts: Vec<f64> = (0..6).map(|i| 1e-1 * 0.5f64.powi(i)).collect();
                let es: Vec<f64> = ts
                    .iter()
                    .map(|&s| {
                        (lagrangian(&p, &along(&x, &xi, s), &y) - f0 - s * g1 - 0.5 * s * s * h2)
                            .abs()
                    })
                    .collect();
                if es[0] > 1e-10 {
                    slope_worst = slope_worst.min(log_slope(&ts, &es));
                }
            }
        }
    }
    let elapsed = t.elapsed();
    let pass = grad_worst <= 1e-6
        && hess_worst <= 1e-4
        && hess_checked >= 30
        && slope_worst >= 2.7
        && elapsed < Duration::from_secs(30);
    report(
        7,
        pass,
        elapsed,
        &format!(
            "gradient rel err {grad_worst:.1e}, Hessian rel err {hess_worst:.1e} ({hess_checked}/60 kink-free), min Taylor slope {slope_worst:.3}"
        ),
    );
    assert!(pass);
}

/// `argmin_u weight·|u| + (u − p)²/(2t)` and its value by grid search with
/// ternary refinement.
fn grid_prox(weight: f64, t: f64, p: f64) -> (f64, f64) {
    let obj = |u: f64| weight * u.abs() + (u - p).powi(2) / (2.0 * t);
    let (lo, hi) = (-p.abs() - 1.0, p.abs() + 1.0);
    let n = 20_001;
    let step = (hi - lo) / (n - 1) as f64;
    let best = (0..n)
        .map(|i| lo + step * i as f64)
        .min_by(|a, b| obj(*a).total_cmp(&obj(*b)))
        .unwrap();
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
    (u, obj(u))
}

#[test]
fn criterion_8_identities() {
    let t = Instant::now();

    let problems = oracle_problems(43);
    let mut r = rng(44);
    let mut identity_worst = 0.0f64;
    for draw in 0..1000u64 {
        let p = &problems[(draw % 3) as usize].1;
        let (rows, cols) = p.multiplier_shape();
        let x = p.manifold.random_point(draw).shared();
        let y = gaussian(&mut r, rows, cols) * r.random_range(0.1..3.0);
        let rho = 10f64.powf(r.random_range(-1.0..2.0));
        let eval = AugLagEval::new(p, rho, &x, &y, BoundaryConvention::Zero).unwrap();
        let lhs = &y + eval.dual_gradient() * rho;
        let rhs = moreau(p.theta.as_ref(), rho, &(&eval.g + &y / rho))
            .unwrap()
            .grad;
        identity_worst = identity_worst.max((lhs - rhs).amax());
    }

    let mut box_worst = 0.0f64;
    let (p, xbar, _) = cm4(0.8);
    let x0 = perturbed(&xbar, 0.1, 3);
    let inst = rmc_small(5);
    let rp = inst.problem().unwrap();
    let rx0 = inst.manifold().random_point(6).shared();
    for k in 1..=10 {
        let cfg = RalmConfig {
            max_outer: k,
            kkt_tol: 0.0,
            ..RalmConfig::default()
        };
        let out = ralm_solve(&p, &cfg, &x0, &Mat::zeros(4, 2)).unwrap();
        box_worst = box_worst.max(out.multiplier.amax() - 0.8);
        let out = ralm_solve(&rp, &cfg, &rx0, &Mat::zeros(inst.a.nrows(), inst.a.ncols())).unwrap();
        box_worst = box_worst.max(out.multiplier.amax() - inst.mu);
    }

    let mut oracle_worst = 0.0f64;
    for i in 0..200 {
        let weight = 0.1 + 0.02 * i as f64;
        let rho = 0.5 + (i % 7) as f64;
        let pt = -3.0 + 0.031 * i as f64;
        let theta = L1Norm::new(weight).unwrap();
        let arg = Mat::from_element(1, 1, pt);
        let prox = theta.prox(1.0 / rho, &arg).unwrap()[(0, 0)];
        let env = moreau(&theta, rho, &arg).unwrap().value;
        let (u, v) = grid_prox(weight, 1.0 / rho, pt);
        oracle_worst = oracle_worst.max((prox - u).abs()).max((env - v).abs());
    }

    let elapsed = t.elapsed();
    let pass = identity_worst <= 1e-12
        && box_worst <= 0.0
        && oracle_worst <= 1e-6
        && elapsed < Duration::from_secs(10);
    report(
        8,
        pass,
        elapsed,
        &format!(
            "envelope identity {identity_worst:.1e} over 1000 draws, box excess {box_worst:.1e}, prox/envelope vs grid {oracle_worst:.1e}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_9_newton_local_rate() {
    let t = Instant::now();
    let (p, xbar, ybar) = cm4(0.8);
    let x0 = perturbed(&xbar, 0.05, 9);
    let cfg = NewtonConfig {
        grad_tol: 1e-13,
        ..NewtonConfig::default()
    };
    let mut iterates: Vec<Arc<ManifoldPoint>> = Vec::new();
    let out = ssn_minimize(&p, 10.0, &ybar, &x0, &cfg, &mut |s| {
        iterates.push(Arc::clone(s.point()));
        false
    })
    .unwrap();
    let d: Vec<f64> = iterates
        .iter()
        .map(|x| ambient_distance(x, &xbar))
        .collect();
    let tail: Vec<f64> = d.iter().copied().filter(|&v| v > 1e-13).collect();
    let n = tail.len();
    let c = if n >= 3 {
        ((n - 3)..(n - 1))
            .map(|k| tail[k + 1] / (tail[k] * tail[k]))
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let elapsed = t.elapsed();
    let pass = out.stats.status == NewtonStatus::Converged
        && c <= 100.0
        && elapsed < Duration::from_secs(5);
    let shown: Vec<String> = d.iter().map(|v| format!("{v:.1e}")).collect();
    report(
        9,
        pass,
        elapsed,
        &format!("C = {c:.3}, distances [{}]", shown.join(", ")),
    );
    assert!(pass);
}

/// The stationary RMC multiplier carries the opposite sign on the outliers;
/// with it the fixture passes the residual and cone checks.
#[test]
fn rmc_fixture_with_consistent_sign() {
    let fx = rmc_reference_fixture([[0.3, -0.4], [0.5, -0.2]]);
    let p = fx.instance.problem().unwrap();
    let x = fx.a_ex.clone().shared();
    assert!(kkt_residual(&p, &x, &fx.multiplier).unwrap() <= 1e-10);
    assert_eq!(
        critical_cone_basis(&p, &x, &fx.multiplier).unwrap().dim(),
        0
    );
    assert_eq!(
        mssosc_certificate(&p, &x, &fx.multiplier).unwrap().verdict,
        Verdict::DegenerateHolds
    );
}

/// Closed-form CM n=4 margin `8 − √2μ` and its sign change at `μ = 4√2`.
#[test]
fn cm4_margin_and_threshold() {
    for mu in [0.4, 0.8, 4.0, 5.6, 5.7, 7.0, 7.2] {
        let (p, x, y) = cm4(mu);
        let cert = mssosc_certificate(&p, &x, &y).unwrap();
        let eig = cert.min_eigenvalue.unwrap();
        assert!((eig - (8.0 - SQRT2 * mu)).abs() <= 1e-8, "mu {mu}: {eig}");
        assert_eq!(cert.verdict.holds(), mu < 4.0 * SQRT2, "mu {mu}");
    }
}

/// For ρ large enough the generalized Hessian and the M-SSOSC agree on the
/// whole CM n=4 sweep.
#[test]
fn cm4_genhess_agrees_for_large_penalty() {
    for mu in [0.4, 0.8, 4.0, 7.1] {
        let (p, x, y) = cm4(mu);
        let m = mssosc_certificate(&p, &x, &y).unwrap();
        for rho in [100.0, 1000.0] {
            let g = genhess_min_eig(&p, rho, &x, &y, true).unwrap();
            assert_eq!(
                g.min_eigenvalue.unwrap() > CERT_TOL,
                m.verdict.holds(),
                "mu {mu}, rho {rho}"
            );
        }
    }
}
