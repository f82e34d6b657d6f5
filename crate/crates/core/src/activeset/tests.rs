use std::collections::HashSet;
use std::f64::consts::TAU;

use approx::assert_abs_diff_eq;
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;

fn gauss_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn gauss_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Random sphere instance with a known feasible point.
fn random_instance(seed: u64, n: usize, m: usize, r: f64) -> (NormQP, DVector<f64>) {
    random_instance_with_slack(seed, n, m, r, 1.0)
}

/// As `random_instance`, with constraint slacks at the start drawn from
/// `[0, slack·r)`.
fn random_instance_with_slack(
    seed: u64,
    n: usize,
    m: usize,
    r: f64,
    slack: f64,
) -> (NormQP, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = gauss_mat(&mut rng, n, n);
    let p = (&g + g.transpose()) * 0.5;
    let q = gauss_vec(&mut rng, n);
    let a = gauss_mat(&mut rng, m, n);
    let x0 = gauss_vec(&mut rng, n).normalize() * r;
    let slack = DVector::from_fn(m, |_, _| rng.random::<f64>() * r * slack);
    let b = &a * &x0 + slack;
    (NormQP::sphere(p, q, a, b, r).unwrap(), x0)
}

fn record(prob: &NormQP, x0: &DVector<f64>) -> (KktPoint, Vec<TraceEvent>) {
    let mut events = Vec::new();
    let sol = solve_fixed_norm_traced(prob, x0, &[], &ActiveSetOptions::default(), &mut |e| {
        events.push(e.clone())
    })
    .unwrap();
    (sol, events)
}

#[test]
fn convex_objective_constant_on_sphere() {
    let prob = NormQP::sphere(
        DMatrix::identity(2, 2),
        DVector::zeros(2),
        dmatrix![1.0, 1.0],
        dvector![5.0],
        1.0,
    )
    .unwrap();
    let sol = solve_fixed_norm(&prob, &dvector![1.0, 0.0], &[], &ActiveSetOptions::default()).unwrap();
    assert_eq!(sol.status, KktStatus::Optimal);
    assert_abs_diff_eq!(sol.mu, -1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(sol.objective, 0.5, epsilon = 1e-12);
}

#[test]
fn indefinite_diagonal_with_halfplane() {
    let prob = NormQP::sphere(
        DMatrix::from_diagonal(&dvector![-2.0, 1.0]),
        DVector::zeros(2),
        dmatrix![1.0, 0.0],
        dvector![0.0],
        1.0,
    )
    .unwrap();
    let sol = solve_fixed_norm(&prob, &dvector![0.0, 1.0], &[], &ActiveSetOptions::default()).unwrap();
    assert_eq!(sol.status, KktStatus::Optimal);
    assert_abs_diff_eq!(sol.x[0], -1.0, epsilon = 1e-9);
    assert_abs_diff_eq!(sol.x[1], 0.0, epsilon = 1e-6);
    assert_abs_diff_eq!(sol.objective, -1.0, epsilon = 1e-12);
    assert!(sol.kappa[0] >= -1e-9);
    assert_abs_diff_eq!(sol.kappa[0], 0.0, epsilon = 1e-9);
}

#[test]
fn random_small_instance_beats_sampling() {
    let (prob, x0) = random_instance(4, 4, 6, 1.0);
    let sol = solve_fixed_norm(&prob, &x0, &[], &ActiveSetOptions::default()).unwrap();
    assert_eq!(sol.status, KktStatus::Optimal);
    assert!(sol.kkt_residual <= 1e-6, "kkt {}", sol.kkt_residual);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut best = f64::INFINITY;
    let mut accepted = 0;
    for _ in 0..100_000 {
        let y = gauss_vec(&mut rng, 4).normalize();
        if prob.slacks(&y).iter().all(|s| *s <= 0.0) {
            accepted += 1;
            best = best.min(prob.objective(&y));
        }
    }
    assert!(accepted > 1000);
    assert!(sol.objective <= best + 1e-6, "{} vs {best}", sol.objective);
}

#[test]
fn rejects_infeasible_start() {
    let (prob, x0) = random_instance(1, 3, 2, 1.0);
    let err = solve_fixed_norm(&prob, &(x0 * 2.0), &[], &ActiveSetOptions::default());
    assert!(matches!(err, Err(crate::Error::InfeasibleStart(_))));
}

fn half_unit_circle() -> NormQP {
    NormQP::sphere(
        DMatrix::zeros(2, 2),
        dvector![-1.0, 0.0],
        dmatrix![1.0, 0.0],
        dvector![0.5],
        1.0,
    )
    .unwrap()
}

#[test]
fn two_dim_at_minimizer_stays() {
    let prob = NormQP::sphere(
        DMatrix::zeros(2, 2),
        dvector![-1.0, 0.0],
        DMatrix::zeros(0, 2),
        DVector::zeros(0),
        1.0,
    )
    .unwrap();
    let ws = WorkingSet::empty(2);
    let x = dvector![1.0, 0.0];
    let out = two_dim_subproblem(&prob, &ws, &x, &x, &x);
    assert_eq!(out.x, x);
    assert_eq!(out.blocking, None);
}

#[test]
fn two_dim_blocks_on_halfplane() {
    let prob = half_unit_circle();
    let ws = WorkingSet::empty(2);
    let xk = dvector![0.0, 1.0];
    let p1 = dvector![1.0, 0.0];
    let out = two_dim_subproblem(&prob, &ws, &xk, &p1, &p1);
    assert_eq!(out.blocking, Some(0));
    assert_abs_diff_eq!(out.x[0], 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(out.x[1], 3f64.sqrt() / 2.0, epsilon = 1e-12);
}

/// Circle through three points of ℝ³ via its circumcentre.
fn circumcircle(a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>) -> (DVector<f64>, f64, DVector<f64>, DVector<f64>) {
    let ab = b - a;
    let ac = c - a;
    let n = ab.cross(&ac);
    let n2 = n.norm_squared();
    let center = a + (n.cross(&ab) * ac.norm_squared() + ac.cross(&n) * ab.norm_squared()) / (2.0 * n2);
    let rho = (a - &center).norm();
    let u = (a - &center) / rho;
    let v = n.cross(&u).normalize();
    (center, rho, u, v)
}

#[test]
fn two_dim_matches_arc_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    for _ in 0..20 {
        let g = gauss_mat(&mut rng, 3, 3);
        let p = (&g + g.transpose()) * 0.5;
        let q = gauss_vec(&mut rng, 3);
        let prob = NormQP::sphere(p, q, DMatrix::zeros(0, 3), DVector::zeros(0), 1.0).unwrap();
        let xk = gauss_vec(&mut rng, 3).normalize();
        let p1 = gauss_vec(&mut rng, 3).normalize();
        let p2 = gauss_vec(&mut rng, 3).normalize();
        let ws = WorkingSet::empty(3);
        let out = two_dim_subproblem(&prob, &ws, &xk, &p1, &p2);
        let (c, rho, u, v) = circumcircle(&xk, &p1, &p2);
        let f = |t: f64| prob.objective(&(&c + (&u * t.cos() + &v * t.sin()) * rho));
        // first local minimum of the sampled values along each direction
        let steps = 10_000;
        let mut firsts = Vec::new();
        for s in [1.0, -1.0] {
            let mut prev = f(0.0);
            let mut k = 1;
            while k <= steps {
                let val = f(s * TAU * k as f64 / steps as f64);
                if val > prev {
                    break;
                }
                prev = val;
                k += 1;
            }
            if k > 1 {
                firsts.push(prev);
            }
        }
        let fk = prob.objective(&xk);
        let fo = prob.objective(&out.x);
        assert!(fo <= fk + 1e-12);
        assert!((out.x.norm() - 1.0).abs() < 1e-12);
        if let Some(best) = firsts.iter().cloned().reduce(f64::min) {
            assert!((fo - best).abs() <= 1e-6, "{fo} vs {best}");
            checked += 1;
        }
    }
    assert!(checked >= 15);
}

#[test]
fn pgd_converged_at_stationary_start() {
    let prob = half_unit_circle();
    let out = projected_gradient_descent(
        &prob,
        &dvector![-1.0, 0.0],
        &WorkingSet::empty(2),
        &ActiveSetOptions::default(),
    );
    assert!(out.converged);
    assert_eq!(out.hit, None);
    assert_eq!(out.steps, 0);
}

#[test]
fn pgd_reaches_geodesic_target() {
    let prob = NormQP::sphere(
        DMatrix::zeros(2, 2),
        dvector![-1.0, 0.0],
        dmatrix![0.0, -1.0],
        dvector![2.0],
        1.0,
    )
    .unwrap();
    let out = projected_gradient_descent(
        &prob,
        &dvector![0.0, 1.0],
        &WorkingSet::empty(2),
        &ActiveSetOptions::default(),
    );
    assert!(out.converged);
    assert_eq!(out.hit, None);
    assert_abs_diff_eq!(out.x[0], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(out.x[1], 0.0, epsilon = 1e-7);
}

#[test]
fn pgd_hits_halfplane() {
    let prob = half_unit_circle();
    let out = projected_gradient_descent(
        &prob,
        &dvector![0.0, 1.0],
        &WorkingSet::empty(2),
        &ActiveSetOptions::default(),
    );
    assert_eq!(out.hit, Some(0));
    // fine fixed-step gradient flow, stopped before leaving x₁ ≤ ½
    let mut y = dvector![0.0, 1.0];
    loop {
        let g = prob.gradient(&y);
        let gt = &g - &y * y.dot(&g);
        let next = (&y - gt * 1e-5).normalize();
        if next[0] > 0.5 {
            break;
        }
        y = next;
    }
    assert!((&out.x - &y).norm() < 1e-4);
    assert!(out.x[0] <= 0.5 + 1e-12);
}

#[test]
fn pre_pgd_zero_steps_is_identity() {
    let (prob, x0) = random_instance(3, 4, 3, 1.0);
    let out = pre_iteration_pgd(&prob, &x0, &WorkingSet::empty(4), 0);
    assert_eq!(out.x, x0);
    assert_eq!(out.hit, None);
}

#[test]
fn pre_pgd_blocked_immediately() {
    let prob = half_unit_circle();
    let x = dvector![0.5, 3f64.sqrt() / 2.0];
    let out = pre_iteration_pgd(&prob, &x, &WorkingSet::empty(2), 5);
    assert_eq!(out.hit, Some(0));
    assert!((&out.x - &x).norm() < 1e-12);
}

#[test]
fn pre_pgd_monotone_on_random_instances() {
    for seed in 0..20 {
        let (prob, x0) = random_instance(seed, 6, 4, 2.0);
        let out = pre_iteration_pgd(&prob, &x0, &WorkingSet::empty(6), 5);
        assert!(prob.objective(&out.x) <= prob.objective(&x0) + 1e-12);
        assert!(prob.max_violation(&out.x) <= 1e-9);
    }
}

#[test]
fn escape_from_circle_maximum() {
    let prob = NormQP::sphere(
        DMatrix::from_diagonal(&dvector![-1.0, 1.0]),
        DVector::zeros(2),
        DMatrix::zeros(0, 2),
        DVector::zeros(0),
        1.0,
    )
    .unwrap();
    let ws = WorkingSet::empty(2);
    let xs = dvector![0.0, 1.0];
    let out = limiting_direction_escape(&prob, &xs, &dvector![1.0, 0.0], &ws).unwrap();
    // circle scan oracle: the minimum on the unit circle is −½
    let best = (0..10_000)
        .map(|k| {
            let t = TAU * k as f64 / 10_000.0;
            prob.objective(&dvector![t.cos(), t.sin()])
        })
        .fold(f64::INFINITY, f64::min);
    assert!(prob.objective(&out.x) < prob.objective(&xs) - 0.5);
    assert_abs_diff_eq!(prob.objective(&out.x), best, epsilon = 1e-6);
}

#[test]
fn escape_refused_for_psd_projection() {
    let prob = NormQP::sphere(
        DMatrix::from_diagonal(&dvector![-1.0, 1.0]),
        DVector::zeros(2),
        DMatrix::zeros(0, 2),
        DVector::zeros(0),
        1.0,
    )
    .unwrap();
    let ws = WorkingSet::empty(2);
    let res = limiting_direction_escape(&prob, &dvector![1.0, 0.0], &dvector![1.0, 0.0], &ws);
    assert!(res.is_err());
}

#[test]
fn escape_blocked_by_separating_constraint() {
    let prob = NormQP::sphere(
        DMatrix::from_diagonal(&dvector![-1.0, 1.0, 2.0]),
        DVector::zeros(3),
        dmatrix![1.0, 0.0, 0.0],
        dvector![0.5],
        1.0,
    )
    .unwrap();
    let ws = WorkingSet::empty(3);
    let xs = dvector![0.0, 1.0, 0.0];
    let out = limiting_direction_escape(&prob, &xs, &dvector![1.0, 0.0, 0.0], &ws).unwrap();
    assert_eq!(out.blocking, Some(0));
    // intersection of the x₁x₂ great circle with x₁ = ½
    assert_abs_diff_eq!(out.x[0], 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(out.x[1], 3f64.sqrt() / 2.0, epsilon = 1e-12);
    assert!(prob.objective(&out.x) < prob.objective(&xs));
}

#[test]
fn multipliers_unconstrained_stationary() {
    let prob = NormQP::sphere(
        DMatrix::from_diagonal(&dvector![1.0, 3.0]),
        DVector::zeros(2),
        DMatrix::zeros(0, 2),
        DVector::zeros(0),
        1.0,
    )
    .unwrap();
    let res = check_multipliers(&prob, &dvector![1.0, 0.0], &WorkingSet::empty(2), 1e-9);
    assert_eq!(
        res,
        MultiplierCheck::Optimal {
            kappa: DVector::zeros(0),
            mu: -1.0
        }
    );
}

/// Problem with `q` chosen so that `∇f + Σ κᵢ aᵢ + μx = 0` at `x = e₁`,
/// with constraints `aᵢ = e_{i+2}`, `bᵢ = 0`.
fn multiplier_instance(kappa: &[f64], mu: f64) -> (NormQP, DVector<f64>, WorkingSet) {
    let n = kappa.len() + 1;
    let x = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let a = DMatrix::from_fn(kappa.len(), n, |i, j| if j == i + 1 { 1.0 } else { 0.0 });
    let mut g = -&x * mu;
    for (i, k) in kappa.iter().enumerate() {
        g -= a.row(i).transpose() * *k;
    }
    let prob = NormQP::sphere(DMatrix::zeros(n, n), g, a, DVector::zeros(kappa.len()), 1.0).unwrap();
    let idx: Vec<usize> = (0..kappa.len()).collect();
    let ws = WorkingSet::from_indices(&prob, &idx).unwrap();
    (prob, x, ws)
}

#[test]
fn multipliers_drop_negative() {
    let (prob, x, ws) = multiplier_instance(&[-0.5], 2.0);
    match check_multipliers(&prob, &x, &ws, 1e-9) {
        MultiplierCheck::Drop { index, kappa, mu } => {
            assert_eq!(index, 0);
            assert_abs_diff_eq!(kappa[0], -0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(mu, 2.0, epsilon = 1e-12);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn multipliers_drop_argmin() {
    let (prob, x, ws) = multiplier_instance(&[0.3, -0.2, -0.7], 1.0);
    match check_multipliers(&prob, &x, &ws, 1e-9) {
        MultiplierCheck::Drop { index, .. } => assert_eq!(index, 2),
        other => panic!("{other:?}"),
    }
    let (prob, x, ws) = multiplier_instance(&[-0.4, 0.1, -0.4], 1.0);
    match check_multipliers(&prob, &x, &ws, 1e-9) {
        MultiplierCheck::Drop { index, .. } => assert_eq!(index, 0),
        other => panic!("{other:?}"),
    }
}

fn ball_instance() -> NormQP {
    NormQP::new(
        DMatrix::identity(2, 2),
        dvector![-2.0, 0.0],
        dmatrix![0.0, 1.0; 1.0, 0.0],
        dvector![1.0, 1.0],
        0.0,
        1.0,
    )
    .unwrap()
}

#[test]
fn kkt_error_zero_at_exact_point() {
    let prob = ball_instance();
    let e = kkt_error(&prob, &dvector![1.0, 0.0], &dvector![0.0, 0.0], 1.0);
    assert!(e.total() <= 1e-12, "{e:?}");
}

#[test]
fn kkt_error_wrong_sign_multiplier() {
    let prob = ball_instance();
    let e = kkt_error(&prob, &dvector![1.0, 0.0], &dvector![0.0, -1.0], 2.0);
    assert_eq!(e.dual, 1.0);
    assert_eq!(e.total(), 1.0);
}

/// Direct evaluation of the error measure, written out term by term.
fn reference_error(prob: &NormQP, x: &DVector<f64>, kappa: &DVector<f64>, mu: f64) -> f64 {
    let nrm2 = x[0] * x[0] + x[1] * x[1];
    let r2 = prob.r_max * prob.r_max;
    let mut primal: f64 = 0.0;
    let mut compl: f64 = 0.0;
    let mut dual: f64 = 0.0;
    let mut stat = [x[0] + prob.q[0] + mu * x[0], x[1] + prob.q[1] + mu * x[1]];
    for i in 0..2 {
        let s = prob.a[(i, 0)] * x[0] + prob.a[(i, 1)] * x[1] - prob.b[i];
        primal = primal.max(s);
        compl = compl.max(kappa[i].min(s.abs()));
        dual = dual.max(-kappa[i]);
        stat[0] += kappa[i] * prob.a[(i, 0)];
        stat[1] += kappa[i] * prob.a[(i, 1)];
    }
    primal = primal.max(nrm2 - r2);
    dual = dual.max(-mu / 2.0);
    compl = compl.max((mu / 2.0).min((nrm2 - r2).abs()));
    let st = stat[0].abs().max(stat[1].abs());
    primal.max(dual).max(st).max(compl)
}

#[test]
fn kkt_error_perturbed_matches_reference() {
    let prob = ball_instance();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let d = gauss_vec(&mut rng, 2).normalize();
        let x = dvector![1.0, 0.0] + d * 1e-3;
        let kappa = dvector![0.0, 0.0];
        let e = kkt_error(&prob, &x, &kappa, 1.0).total();
        let reference = reference_error(&prob, &x, &kappa, 1.0);
        assert!((1e-6..=1e-1).contains(&e), "{e}");
        assert_abs_diff_eq!(e, reference, epsilon = 1e-15);
    }
}

/// Checks the per-iteration invariants of a traced solve.
fn check_trace(sol: &KktPoint, events: &[TraceEvent]) -> std::result::Result<(), String> {
    let mut seen = HashSet::new();
    let mut last = f64::INFINITY;
    for e in events {
        if e.objective > last + 1e-12 * last.abs().max(1.0) {
            return Err(format!("objective rose from {last} to {}", e.objective));
        }
        last = e.objective;
        let key = (e.working_set.clone(), (e.objective * 1e10).round() as i64);
        if e.step != StepKind::Stationary && !seen.insert(key) {
            return Err(format!("working set {:?} revisited", e.working_set));
        }
        if let StepKind::Drop(_) = e.step {
            if !(e.dropped_multiplier.unwrap() < 0.0) {
                return Err("dropped a nonnegative multiplier".into());
            }
        }
    }
    if sol.objective > last + 1e-12 * last.abs().max(1.0) {
        return Err("final objective above trace".into());
    }
    Ok(())
}

#[test]
fn random_suite_invariants() {
    for seed in 0..30 {
        let n = 3 + (seed as usize % 6);
        let m = 2 + (seed as usize % 9);
        let (prob, x0) = random_instance(seed, n, m, 10.0);
        let (sol, events) = record(&prob, &x0);
        assert_eq!(sol.status, KktStatus::Optimal, "seed {seed}");
        assert!(sol.kkt_residual <= 1e-6, "seed {seed}: {}", sol.kkt_residual);
        assert!(prob.max_violation(&sol.x) <= 1e-9, "seed {seed}");
        assert!(sol.objective <= prob.objective(&x0) + 1e-12);
        check_trace(&sol, &events).unwrap();
        for &i in &sol.working_set {
            assert!(prob.slacks(&sol.x)[i].abs() <= 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solve_invariants(seed in 0u64..100_000, n in 2usize..9, m in 1usize..12) {
        let (prob, x0) = random_instance(seed, n, m, 5.0);
        let (sol, events) = record(&prob, &x0);
        prop_assert!(sol.iterations <= 100 * (m + n));
        prop_assert!(prob.max_violation(&sol.x) <= 1e-9);
        prop_assert!(sol.objective <= prob.objective(&x0) + 1e-12 * prob.objective(&x0).abs().max(1.0));
        if sol.status == KktStatus::Optimal {
            prop_assert!(sol.kkt_residual <= 1e-6, "kkt {}", sol.kkt_residual);
        }
        if let Err(msg) = check_trace(&sol, &events) {
            prop_assert!(false, "{}", msg);
        }
        let ws = WorkingSet::from_indices(&prob, &sol.working_set);
        prop_assert!(ws.is_ok());
    }
}

#[test]
fn nearly_degenerate_start_suite() {
    for seed in 0..40u64 {
        let n = 5 + (seed as usize % 10);
        let m = (1.5 * n as f64).round() as usize;
        let (prob, x0) = random_instance_with_slack(seed, n, m, 100.0, 1e-5);
        let (sol, events) = record(&prob, &x0);
        assert_eq!(sol.status, KktStatus::Optimal, "seed {seed}");
        assert!(sol.kkt_residual <= 1e-6, "seed {seed}: {}", sol.kkt_residual);
        assert!(prob.max_violation(&sol.x) <= 1e-9, "seed {seed}");
        check_trace(&sol, &events).unwrap();
    }
}
