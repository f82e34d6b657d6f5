use approx::assert_abs_diff_eq;
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::numerics::{assemble, eigenvalues_general, LinearOperator, RANK_TOL};

fn circle_objective(p: &DMatrix<f64>, q: &DVector<f64>, r: f64, t: f64) -> f64 {
    let x = dvector![r * t.cos(), r * t.sin()];
    0.5 * x.dot(&(p * &x)) + q.dot(&x)
}

/// Strict local minima of f on the circle of radius r, refined by golden
/// section, sorted by objective.
fn circle_local_minima(p: &DMatrix<f64>, q: &DVector<f64>, r: f64) -> Vec<(f64, DVector<f64>)> {
    let k = 20_000;
    let h = std::f64::consts::TAU / k as f64;
    let vals: Vec<f64> = (0..k).map(|i| circle_objective(p, q, r, i as f64 * h)).collect();
    let mut out = Vec::new();
    for i in 0..k {
        let prev = vals[(i + k - 1) % k];
        let next = vals[(i + 1) % k];
        if vals[i] < prev && vals[i] <= next {
            let (mut lo, mut hi) = ((i as f64 - 1.0) * h, (i as f64 + 1.0) * h);
            let g = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..80 {
                let a = hi - g * (hi - lo);
                let b = lo + g * (hi - lo);
                if circle_objective(p, q, r, a) < circle_objective(p, q, r, b) {
                    hi = b;
                } else {
                    lo = a;
                }
            }
            let t = 0.5 * (lo + hi);
            out.push((circle_objective(p, q, r, t), dvector![r * t.cos(), r * t.sin()]));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&g + g.transpose()) * 0.5
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

#[test]
fn secular_examples() {
    let f = SecularFn::from_problem(&dmatrix![1.0, 0.0; 0.0, 2.0], &dvector![1.0, 1.0], 1.0).unwrap();
    assert_abs_diff_eq!(f.eval_real(0.0).unwrap(), 0.25, epsilon = 1e-15);
    assert_abs_diff_eq!(f.eval_real(-3.0).unwrap(), 0.25, epsilon = 1e-15);
    // Re s(i) = Re(1/(1+i)² + 1/(2+i)²) − 1 = 0 + 3/25 − 1
    let z = f.eval(Complex64::new(0.0, 1.0)).unwrap();
    assert_abs_diff_eq!(z.re, 3.0 / 25.0 - 1.0, epsilon = 1e-15);
    assert!(z.re < f.eval_real(0.0).unwrap());
    assert!(matches!(f.eval_real(-1.0), Err(Error::Pole)));
    // s'(0) = −2(1 + 1/8)
    assert_abs_diff_eq!(f.deriv(0.0).unwrap(), -2.25, epsilon = 1e-15);
}

#[test]
fn m_operator_block_triangular_when_q_zero() {
    let p = -DMatrix::<f64>::identity(2, 2);
    let proj = NullspaceProjector::identity(2);
    let op = build_m_operator(&p, &DVector::zeros(2), 1.0, &proj, 0.0);
    let dense = assemble(&op);
    let mut expect = DMatrix::identity(4, 4);
    expect.view_mut((2, 0), (2, 2)).copy_from(&DMatrix::identity(2, 2));
    assert_eq!(dense, expect);
    for v in eigenvalues_general(&dense).unwrap() {
        assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-7);
    }
}

#[test]
fn m_operator_output_in_nullspace() {
    let a = dmatrix![1.0, 1.0];
    let proj = NullspaceProjector::new(&a, RANK_TOL).unwrap();
    let p = dmatrix![2.0, 0.5; 0.5, -1.0];
    let op = build_m_operator(&p, &dvector![0.3, 1.0], 1.0, &proj, 3.0);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let out = op.apply(&dvector![h, -h, h, -h]);
    assert_abs_diff_eq!(out[0] + out[1], 0.0, epsilon = 1e-14);
    assert_abs_diff_eq!(out[2] + out[3], 0.0, epsilon = 1e-14);
}

#[test]
fn m_operator_matches_dense_projected_assembly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random_sym(&mut rng, 3);
    let q = random_vec(&mut rng, 3);
    let a = DMatrix::from_fn(1, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
    let proj = NullspaceProjector::new(&a, RANK_TOL).unwrap();
    let alpha = 4.0;
    let op = build_m_operator(&p, &q, 1.7, &proj, alpha);
    // oracle: explicit Π = I − aᵀa/‖a‖² and block products
    let pi = DMatrix::identity(3, 3) - a.transpose() * &a / a.norm_squared();
    let mut pi2 = DMatrix::zeros(6, 6);
    pi2.view_mut((0, 0), (3, 3)).copy_from(&pi);
    pi2.view_mut((3, 3), (3, 3)).copy_from(&pi);
    let m = assemble_m(&p, &q, 1.7, alpha);
    let expect = &pi2 * m * &pi2;
    assert_abs_diff_eq!(assemble(&op), expect, epsilon = 1e-13);
}

#[test]
fn shift_examples() {
    let (alpha, offset) = shift_negative_definite(&DMatrix::from_diagonal(&dvector![1.0, 2.0]), 2.0);
    assert!(alpha > 2.0);
    assert_abs_diff_eq!(offset, -2.0 * alpha, epsilon = 1e-14);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let p = random_sym(&mut rng, 6);
        let (alpha, _) = shift_negative_definite(&p, 1.0);
        let shifted = &p - DMatrix::identity(6, 6) * alpha;
        assert!(sym_eig_dense(&shifted).unwrap().values[5] < 0.0);
    }
}

#[test]
fn translate_examples() {
    let p = DMatrix::identity(3, 3);
    let q = DVector::zeros(3);
    let proj = NullspaceProjector::new(&dmatrix![1.0, 0.0, 0.0], RANK_TOL).unwrap();
    let t = translate_inhomogeneous(&p, &q, &proj, Some(&dvector![0.0]), 2.0).unwrap();
    assert_eq!(t.x0, DVector::zeros(3));
    assert_eq!(t.r_tilde, 2.0);
    let t = translate_inhomogeneous(&p, &q, &proj, Some(&dvector![3.0]), 5.0).unwrap();
    assert_abs_diff_eq!(t.x0, dvector![3.0, 0.0, 0.0], epsilon = 1e-15);
    assert_abs_diff_eq!(t.r_tilde, 4.0, epsilon = 1e-14);
    let err = translate_inhomogeneous(&p, &q, &proj, Some(&dvector![2.0]), 1.0).unwrap_err();
    assert!(matches!(err, Error::SphereIncompatible { .. }));
}

#[test]
fn extract_examples() {
    let q = dvector![1.0, 1.0];
    let x = extract_minimizer(&dvector![1.0, 0.0, 1.0, 0.0], &q, 2.0, None, 1e-7).unwrap();
    assert_eq!(x, dvector![-2.0, 0.0]);
    let x = extract_minimizer(&dvector![0.0, 1.0, -1.0, 0.0], &q, 1.0, None, 1e-7).unwrap();
    assert_eq!(x, dvector![0.0, 1.0]);
    assert!(extract_minimizer(&dvector![0.0, 0.0, 1.0, 0.0], &q, 1.0, None, 1e-7).is_none());
}

#[test]
fn identity_unique_global() {
    let out = solve_trs(&TrsProblem::sphere(DMatrix::identity(2, 2), dvector![-1.0, 0.0], 1.0)).unwrap();
    assert_eq!(out.kind, TrsKind::UniqueGlobal);
    assert_abs_diff_eq!(out.global_points[0], dvector![1.0, 0.0], epsilon = 1e-12);
    assert_abs_diff_eq!(out.global_multiplier, 0.0, epsilon = 1e-12);
    // spectrum of M is {0, −1, −1, −2}: the second value lies in spec(−P)
    assert_abs_diff_eq!(out.diagnostics.eigenvalues[1].re, -1.0, epsilon = 1e-6);
}

#[test]
fn hard_case_pair() {
    let p = DMatrix::from_diagonal(&dvector![1.0, 2.0]);
    let out = solve_trs(&TrsProblem::sphere(p.clone(), dvector![0.0, 0.5], 1.0)).unwrap();
    assert_eq!(out.kind, TrsKind::HardCasePair);
    assert_abs_diff_eq!(out.global_multiplier, -1.0, epsilon = 1e-12);
    let s = 3f64.sqrt() / 2.0;
    let mut xs: Vec<_> = out.global_points.clone();
    xs.sort_by(|a, b| a[0].total_cmp(&b[0]));
    assert_abs_diff_eq!(xs[0], dvector![-s, -0.5], epsilon = 1e-12);
    assert_abs_diff_eq!(xs[1], dvector![s, -0.5], epsilon = 1e-12);
    let prob = TrsProblem::sphere(p, dvector![0.0, 0.5], 1.0);
    for x in &xs {
        assert_abs_diff_eq!(prob.objective(x), 0.375, epsilon = 1e-12);
    }
    // grid oracle: two global minima at f = 0.375
    let minima = circle_local_minima(&prob.p, &prob.q, 1.0);
    assert_eq!(minima.len(), 2);
    assert_abs_diff_eq!(minima[0].0, 0.375, epsilon = 1e-12);
}

#[test]
fn hard_case_solutions_direct() {
    let p = DMatrix::from_diagonal(&dvector![1.0, 2.0]);
    let proj = NullspaceProjector::identity(2);
    let (xa, xb) =
        hard_case_solutions(&p, -1.0, &dvector![0.0, 0.5], &dvector![1.0, 0.0], &proj, 1.0).unwrap();
    let s = 3f64.sqrt() / 2.0;
    assert_abs_diff_eq!(xa, dvector![s, -0.5], epsilon = 1e-12);
    assert_abs_diff_eq!(xb, dvector![-s, -0.5], epsilon = 1e-12);
}

#[test]
fn hard_case_zero_q() {
    let p = DMatrix::from_diagonal(&dvector![1.0, 2.0]);
    let out = solve_trs(&TrsProblem::sphere(p, DVector::zeros(2), 1.0)).unwrap();
    assert_eq!(out.kind, TrsKind::HardCasePair);
    assert_abs_diff_eq!(out.global_multiplier, -1.0, epsilon = 1e-12);
    for x in &out.global_points {
        assert_abs_diff_eq!(x[0].abs(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 0.0, epsilon = 1e-12);
    }
}

#[test]
fn hard_case_embedded_with_equality() {
    let p = DMatrix::from_diagonal(&dvector![1.0, 2.0, 5.0]);
    let prob = TrsProblem::sphere(p, dvector![0.0, 0.5, 0.7], 1.0)
        .with_equalities(dmatrix![0.0, 0.0, 1.0], dvector![0.0]);
    let out = solve_trs(&prob).unwrap();
    assert_eq!(out.kind, TrsKind::HardCasePair);
    let s = 3f64.sqrt() / 2.0;
    let mut xs = out.global_points.clone();
    xs.sort_by(|a, b| a[0].total_cmp(&b[0]));
    assert_abs_diff_eq!(xs[0], dvector![-s, -0.5, 0.0], epsilon = 1e-12);
    assert_abs_diff_eq!(xs[1], dvector![s, -0.5, 0.0], epsilon = 1e-12);
}

#[test]
fn local_nonglobal_on_indefinite_diagonal() {
    let p = DMatrix::from_diagonal(&dvector![-1.0, 1.0]);
    let q = dvector![0.2, 0.2];
    let prob = TrsProblem::sphere(p.clone(), q.clone(), 1.0);
    let out = solve_trs(&prob).unwrap();
    assert_eq!(out.kind, TrsKind::GlobalAndLocal);
    let xg = &out.global_points[0];
    let xl = out.local_point.as_ref().unwrap();
    assert!(prob.objective(xg) < prob.objective(xl));
    let mu_l = out.local_multiplier.unwrap();
    assert!(mu_l > -1.0 && mu_l < 1.0);
    assert!(mu_l < out.global_multiplier);
    // circle-scan oracle
    let minima = circle_local_minima(&p, &q, 1.0);
    assert_eq!(minima.len(), 2);
    assert_abs_diff_eq!(xg, &minima[0].1, epsilon = 1e-6);
    assert_abs_diff_eq!(xl, &minima[1].1, epsilon = 1e-6);
}

#[test]
fn ball_mode_interior() {
    let p = DMatrix::from_diagonal(&dvector![2.0, 3.0]);
    let out = solve_trs(&TrsProblem::sphere(p, dvector![-1.0, 0.0], 1.0).ball()).unwrap();
    assert_eq!(out.kind, TrsKind::InteriorGlobal);
    assert_abs_diff_eq!(out.global_points[0], dvector![0.5, 0.0], epsilon = 1e-12);
    assert_eq!(out.global_multiplier, 0.0);
}

#[test]
fn ball_mode_boundary_when_multiplier_positive() {
    let p = DMatrix::from_diagonal(&dvector![2.0, 3.0]);
    let out = solve_trs(&TrsProblem::sphere(p, dvector![-4.0, 0.0], 1.0).ball()).unwrap();
    assert_eq!(out.kind, TrsKind::UniqueGlobal);
    assert_abs_diff_eq!(out.global_points[0], dvector![1.0, 0.0], epsilon = 1e-12);
    assert_abs_diff_eq!(out.global_multiplier, 2.0, epsilon = 1e-12);
}

#[test]
fn rejects_too_many_equalities() {
    let prob = TrsProblem::sphere(DMatrix::identity(2, 2), dvector![1.0, 0.0], 1.0)
        .with_equalities(dmatrix![1.0, 0.0], dvector![0.0]);
    assert!(matches!(solve_trs(&prob), Err(Error::InvalidInput(_))));
}

#[test]
fn arnoldi_path_matches_dense_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [12, 45] {
        let p = random_sym(&mut rng, n);
        let q = random_vec(&mut rng, n);
        let a = DMatrix::from_fn(2, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = random_vec(&mut rng, 2) * 0.1;
        let prob = TrsProblem::sphere(p, q, 3.0).with_equalities(a, b);
        let dense = solve_trs_with(&prob, &TrsOptions { force_dense: true, ..Default::default() }).unwrap();
        let arn = solve_trs_with(
            &prob,
            &TrsOptions { force_arnoldi: true, max_restarts: 300, ..Default::default() },
        )
        .unwrap();
        assert!(!arn.diagnostics.used_dense);
        assert_eq!(dense.kind, arn.kind);
        assert_abs_diff_eq!(dense.global_points[0], arn.global_points[0], epsilon = 1e-8);
        assert_abs_diff_eq!(dense.global_multiplier, arn.global_multiplier, epsilon = 1e-8);
    }
}

fn great_circle_check(prob: &TrsProblem, x: &DVector<f64>, rng: &mut ChaCha8Rng) -> bool {
    let n = x.len();
    let fx = prob.objective(x);
    for _ in 0..50 {
        let d = random_vec(rng, n);
        let d = &d - x * (x.dot(&d) / x.norm_squared());
        let d = d.normalize();
        let r = x.norm();
        for t in [1e-3f64, -1e-3] {
            let y = x * t.cos() + &d * (r * t.sin());
            if prob.objective(&y) <= fx {
                return false;
            }
        }
    }
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rightmost_is_real_and_right_of_minus_lambda1(seed in 0u64..10_000, n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_sym(&mut rng, n);
        let q = random_vec(&mut rng, n);
        let r = 0.2 + rng.random::<f64>() * 3.0;
        let out = solve_trs(&TrsProblem::sphere(p.clone(), q, r)).unwrap();
        let lam1 = sym_eig_dense(&p).unwrap().values[0];
        prop_assert!(out.diagnostics.eigenvalues[0].im.abs() < 1e-8);
        prop_assert!(out.global_multiplier >= -lam1 - 1e-8);
    }

    #[test]
    fn shift_invariance(seed in 0u64..10_000, n in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_sym(&mut rng, n);
        let q = random_vec(&mut rng, n);
        let prob = TrsProblem::sphere(p, q, 1.5);
        let a = solve_trs(&prob).unwrap();
        let b = solve_trs_with(&prob, &TrsOptions { extra_shift: 10.0, ..Default::default() }).unwrap();
        prop_assert_eq!(a.kind, b.kind);
        prop_assert!((&a.global_points[0] - &b.global_points[0]).norm() <= 1e-8);
        prop_assert!((b.shift_used - a.shift_used - 10.0).abs() < 1e-12);
    }

    #[test]
    fn lemma_aux(seed in 0u64..10_000, n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lambdas = random_vec(&mut rng, n);
        let weights = random_vec(&mut rng, n).map(|v| v * v + 1e-3);
        let f = SecularFn::new(lambdas.clone(), weights, 0.5 + rng.random::<f64>());
        let a: f64 = rng.sample::<f64, _>(StandardNormal) * 2.0;
        let b: f64 = rng.sample::<f64, _>(StandardNormal);
        prop_assume!(b.abs() > 1e-6);
        prop_assume!(lambdas.iter().all(|l| (l + a).abs() > 1e-6));
        let complex = f.eval(Complex64::new(a, b)).unwrap().re;
        prop_assert!(complex < f.eval_real(a).unwrap());
    }

    #[test]
    fn local_nonglobal_is_strict_local_min(seed in 0u64..10_000, n in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_sym(&mut rng, n);
        let q = random_vec(&mut rng, n) * 0.3;
        let prob = TrsProblem::sphere(p, q, 1.0);
        let out = solve_trs(&prob).unwrap();
        if out.kind == TrsKind::GlobalAndLocal {
            let xl = out.local_point.clone().unwrap();
            prop_assert!(great_circle_check(&prob, &xl, &mut rng));
            prop_assert!(out.local_multiplier.unwrap() < out.global_multiplier);
            prop_assert!(prob.objective(&out.global_points[0]) <= prob.objective(&xl) + 1e-12);
        }
        prop_assert!(great_circle_check(&prob, &out.global_points[0], &mut rng)
            || out.kind == TrsKind::HardCasePair);
    }
}
