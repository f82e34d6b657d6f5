//! Independent reference computations for the acceptance suite.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gauss_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn gauss_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn sym(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = gauss_mat(rng, n, n);
    (&g + g.transpose()) * 0.5
}

/// Eigenvalues ascending with matching orthonormal eigenvectors.
pub fn eigh(p: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let e = p.clone().symmetric_eigen();
    let n = p.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| e.eigenvalues[i].total_cmp(&e.eigenvalues[j]));
    let vals = DVector::from_fn(n, |i, _| e.eigenvalues[idx[i]]);
    let vecs = DMatrix::from_fn(n, n, |r, c| e.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

// ---------------------------------------------------------------------------
// polynomials

/// Coefficients, lowest degree first.
pub type Poly = Vec<f64>;

pub fn poly_mul(a: &[f64], b: &[f64]) -> Poly {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn poly_add(a: &[f64], b: &[f64]) -> Poly {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, x) in b.iter().enumerate() {
        out[i] += x;
    }
    out
}

fn horner(c: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &a in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// All complex roots by the Aberth–Ehrlich simultaneous iteration.
pub fn aberth(c: &[f64]) -> Vec<Complex64> {
    let deg = c.len() - 1;
    let lead = c[deg];
    let bound = 1.0 + c[..deg].iter().map(|a| (a / lead).abs()).fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..deg)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / deg as f64 + 0.4;
            Complex64::from_polar(0.5 * bound, t)
        })
        .collect();
    for _ in 0..2000 {
        let mut moved = 0.0_f64;
        for k in 0..deg {
            let (p, dp) = horner(c, z[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let mut s = Complex64::new(0.0, 0.0);
            for j in 0..deg {
                if j != k {
                    s += Complex64::new(1.0, 0.0) / (z[k] - z[j]);
                }
            }
            let w = ratio / (Complex64::new(1.0, 0.0) - ratio * s);
            z[k] -= w;
            moved = moved.max(w.norm() / z[k].norm().max(1.0));
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}

/// Greedy nearest matching of two multisets; returns the worst distance.
pub fn match_multisets(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut used = vec![false; b.len()];
    let mut worst = 0.0_f64;
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| a[i].re.total_cmp(&a[j].re).then(a[i].im.total_cmp(&a[j].im)));
    for i in order {
        let (j, d) = (0..b.len())
            .filter(|&j| !used[j])
            .map(|j| (j, (a[i] - b[j]).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

/// `Π(λᵢ+μ)² · (Σ cᵢ²/(λᵢ+μ)² − r²)` as a polynomial in `μ`.
pub fn secular_polynomial(lambdas: &[f64], c: &[f64], r: f64) -> Poly {
    let n = lambdas.len();
    let sq = |l: f64| vec![l * l, 2.0 * l, 1.0];
    let mut total = vec![0.0];
    for i in 0..n {
        let mut term = vec![c[i] * c[i]];
        for (j, &l) in lambdas.iter().enumerate() {
            if j != i {
                term = poly_mul(&term, &sq(l));
            }
        }
        total = poly_add(&total, &term);
    }
    let mut full = vec![-r * r];
    for &l in lambdas {
        full = poly_mul(&full, &sq(l));
    }
    poly_add(&total, &full)
}

// ---------------------------------------------------------------------------
// trust-region references

/// Orthonormal basis of `null(A)` and the minimum-norm solution of `Ax = b`
/// from a full SVD.
pub fn nullspace_and_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (m, n) = a.shape();
    // A = U S Vᵀ through the eigendecomposition of AᵀA
    let (_, vecs) = eigh(&(a.transpose() * a));
    let rank = m.min(n);
    let z = vecs.columns(0, n - rank).into_owned();
    let range = vecs.columns(n - rank, rank).into_owned();
    let ar = a * &range;
    let y = ar.clone().lu().solve(b).expect("full row rank");
    (z, range * y)
}

/// Global minimizer of `½yᵀHy + gᵀy` on `‖y‖ = r` by bisection on the
/// secular equation (easy case only).
pub fn trs_secular_bisection(h: &DMatrix<f64>, g: &DVector<f64>, r: f64) -> (DVector<f64>, f64) {
    let (lam, v) = eigh(h);
    let c = v.transpose() * g;
    let norm_at = |mu: f64| -> f64 {
        c.iter()
            .zip(lam.iter())
            .map(|(ci, li)| (ci / (li + mu)).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut lo = -lam[0];
    let mut hi = -lam[0] + g.norm() / r + 1.0;
    while norm_at(hi) > r {
        hi = lo + 2.0 * (hi - lo);
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm_at(mid) > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let y = -(&v * DVector::from_fn(lam.len(), |i, _| c[i] / (lam[i] + mu)));
    (y, mu)
}

#[derive(Clone, Debug)]
pub struct KktEnumeration {
    pub has_local_nonglobal: bool,
    /// Some candidate sits within tolerance of a decision boundary.
    pub borderline: bool,
    pub detail: String,
}

/// Stationary points of the TRS from every real eigenvalue of the dense
/// `M`, classified by the second-order condition on the sphere tangent.
pub fn enumerate_kkt(p: &DMatrix<f64>, q: &DVector<f64>, r: f64, m_eigs: &[Complex64]) -> KktEnumeration {
    let n = p.nrows();
    let scale = p.amax().max(1.0);
    let mut cands: Vec<(f64, f64, f64)> = Vec::new(); // (μ, f, min tangent curvature)
    let mut borderline = false;
    for z in m_eigs {
        if z.im.abs() > 1e-6 * z.norm().max(1.0) {
            continue;
        }
        let mu = z.re;
        let shifted = p + DMatrix::identity(n, n) * mu;
        let Some(x) = shifted.clone().lu().solve(&(-q)) else {
            continue;
        };
        let norm_err = (x.norm() - r).abs() / r;
        if norm_err > 1e-4 {
            continue;
        }
        if norm_err > 1e-8 {
            borderline = true;
        }
        // tangent basis: complement of x
        let u = &x / x.norm();
        let proj = DMatrix::identity(n, n) - &u * u.transpose();
        let t = eigh(&proj).1.columns(1, n - 1).into_owned();
        let h = t.transpose() * &shifted * &t;
        let curv = eigh(&h).0[0];
        let f = 0.5 * x.dot(&(p * &x)) + q.dot(&x);
        cands.push((mu, f, curv));
    }
    let fmin = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let ftol = 1e-9 * scale * r * r.max(1.0);
    let mut local = 0;
    for &(_, f, curv) in &cands {
        if curv.abs() <= 1e-7 * scale {
            borderline = true;
        }
        if (f - fmin).abs() <= 1e3 * ftol && (f - fmin).abs() > ftol {
            borderline = true;
        }
        if curv > 1e-7 * scale && f > fmin + ftol {
            local += 1;
        }
    }
    KktEnumeration {
        has_local_nonglobal: local > 0,
        borderline,
        detail: format!("{cands:?}"),
    }
}

// ---------------------------------------------------------------------------
// sparse PCA references

/// `max xᵀΣx` over `{‖x‖₂ ≤ 1, ‖x‖₁ ≤ γ}` for `n ≤ 3`: direction grid with
/// the largest admissible radius per direction, refined around the best
/// cells.
pub fn scotlass_grid(sigma: &DMatrix<f64>, gamma: f64) -> f64 {
    let n = sigma.nrows();
    let value = |u: &DVector<f64>| {
        let u = u / u.norm();
        let l1: f64 = u.iter().map(|v| v.abs()).sum();
        let rho = (gamma / l1).min(1.0);
        rho * rho * u.dot(&(sigma * &u))
    };
    match n {
        1 => sigma[(0, 0)],
        2 => {
            let f = |t: f64| value(&DVector::from_vec(vec![t.cos(), t.sin()]));
            let mut best = (f64::NEG_INFINITY, 0.0);
            let (mut lo, mut hi) = (0.0, std::f64::consts::PI);
            for _ in 0..4 {
                let steps = 20_000;
                let h = (hi - lo) / steps as f64;
                for s in 0..=steps {
                    let t = lo + h * s as f64;
                    let v = f(t);
                    if v > best.0 {
                        best = (v, t);
                    }
                }
                lo = best.1 - 2.0 * h;
                hi = best.1 + 2.0 * h;
            }
            best.0
        }
        3 => {
            let f = |th: f64, ph: f64| {
                value(&DVector::from_vec(vec![
                    th.sin() * ph.cos(),
                    th.sin() * ph.sin(),
                    th.cos(),
                ]))
            };
            let pi = std::f64::consts::PI;
            let (nt, np) = (300, 600);
            let mut cells: Vec<(f64, f64, f64)> = Vec::with_capacity(nt * np);
            for i in 0..=nt {
                for j in 0..np {
                    let th = pi * i as f64 / nt as f64;
                    let ph = 2.0 * pi * j as f64 / np as f64;
                    cells.push((f(th, ph), th, ph));
                }
            }
            cells.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mut best = cells[0].0;
            for &(_, th0, ph0) in cells.iter().take(200) {
                let (mut th, mut ph) = (th0, ph0);
                let mut h = pi / nt as f64;
                for _ in 0..8 {
                    let mut local = (f64::NEG_INFINITY, th, ph);
                    let k = 20;
                    for a in -k..=k {
                        for b in -k..=k {
                            let t = th + h * a as f64 / k as f64;
                            let p = ph + 2.0 * h * b as f64 / k as f64;
                            let v = f(t, p);
                            if v > local.0 {
                                local = (v, t, p);
                            }
                        }
                    }
                    th = local.1;
                    ph = local.2;
                    best = best.max(local.0);
                    h /= 5.0;
                }
            }
            best
        }
        _ => panic!("grid reference supports n ≤ 3"),
    }
}

/// `u vᵀ + noise·G` with `v` a unit vector on a random `sparsity`-subset;
/// returns the dense data and the planted support.
pub fn planted_model(
    rng: &mut ChaCha8Rng,
    k: usize,
    n: usize,
    sparsity: usize,
    noise: f64,
) -> (DMatrix<f64>, Vec<usize>) {
    let u = gauss_vec(rng, k);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..sparsity {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut truth = idx[..sparsity].to_vec();
    truth.sort_unstable();
    let mut v = DVector::zeros(n);
    for &j in &truth {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        v[j] = sign * (0.5 + rng.random::<f64>());
    }
    v /= v.norm();
    let d = &u * v.transpose() + gauss_mat(rng, k, n) * noise;
    (d, truth)
}
