//! Least-squares multipliers and Newton refinement of stationary points of
//! `min f(x)  s.t.  Āx = b̄, ‖x‖ = r`.

use nalgebra::{DMatrix, DVector};

/// Least-squares `(ν, μ)` minimizing `‖Px + q + Āᵀν + μx‖`. Returns `None`
/// when `[Āᵀ, x]` is rank deficient.
pub(crate) fn sphere_multipliers(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    abar: &DMatrix<f64>,
    x: &DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    let n = x.len();
    let k = abar.nrows();
    let mut b = DMatrix::zeros(n, k + 1);
    b.view_mut((0, 0), (n, k)).copy_from(&abar.transpose());
    b.set_column(k, x);
    let g = p * x + q;
    let sol = least_squares(&b, &(-g))?;
    Some((sol.rows(0, k).into_owned(), sol[k]))
}

/// Least-squares solution of an overdetermined full-column-rank system.
pub(crate) fn least_squares(b: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let cols = b.ncols();
    if cols == 0 {
        return Some(DVector::zeros(0));
    }
    if b.nrows() < cols {
        return None;
    }
    let qr = b.clone().qr();
    let r = qr.r();
    let largest = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..cols).any(|i| r[(i, i)].abs() <= 1e-10 * largest) || largest == 0.0 {
        return None;
    }
    let qt_rhs = qr.q().transpose() * rhs;
    r.solve_upper_triangular(&qt_rhs)
}

#[derive(Clone, Debug)]
pub(crate) struct Refined {
    pub x: DVector<f64>,
    pub nu: DVector<f64>,
    pub mu: f64,
}

fn residual(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    abar: &DMatrix<f64>,
    bbar: &DVector<f64>,
    r: f64,
    s: &Refined,
) -> DVector<f64> {
    let n = s.x.len();
    let k = abar.nrows();
    let mut f = DVector::zeros(n + k + 1);
    let stat = p * &s.x + q + abar.transpose() * &s.nu + &s.x * s.mu;
    f.rows_mut(0, n).copy_from(&stat);
    if k > 0 {
        f.rows_mut(n, k).copy_from(&(abar * &s.x - bbar));
    }
    f[n + k] = 0.5 * (s.x.norm_squared() - r * r) / r.max(f64::MIN_POSITIVE);
    f
}

/// Newton iterations on the KKT system of the sphere-and-equalities
/// subproblem. Each step is accepted only if it reduces the residual and the
/// total displacement stays below `max_move`.
pub(crate) fn newton_polish(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    abar: &DMatrix<f64>,
    bbar: &DVector<f64>,
    r: f64,
    start: Refined,
    max_move: f64,
) -> Refined {
    let n = start.x.len();
    let k = abar.nrows();
    let mut cur = start.clone();
    let mut f = residual(p, q, abar, bbar, r, &cur);
    let mut fnorm = f.norm();
    for _ in 0..6 {
        if fnorm == 0.0 {
            break;
        }
        let dim = n + k + 1;
        let mut j = DMatrix::zeros(dim, dim);
        let mut h = p.clone();
        for i in 0..n {
            h[(i, i)] += cur.mu;
        }
        j.view_mut((0, 0), (n, n)).copy_from(&h);
        if k > 0 {
            j.view_mut((0, n), (n, k)).copy_from(&abar.transpose());
            j.view_mut((n, 0), (k, n)).copy_from(abar);
        }
        let xs = &cur.x / r.max(f64::MIN_POSITIVE);
        j.view_mut((0, n + k), (n, 1)).copy_from(&cur.x);
        j.view_mut((n + k, 0), (1, n)).copy_from(&xs.transpose());
        let Some(step) = j.lu().solve(&(-&f)) else {
            break;
        };
        if !step.iter().all(|v| v.is_finite()) {
            break;
        }
        let trial = Refined {
            x: &cur.x + step.rows(0, n),
            nu: &cur.nu + step.rows(n, k),
            mu: cur.mu + step[n + k],
        };
        if (&trial.x - &start.x).norm() > max_move {
            break;
        }
        let tf = residual(p, q, abar, bbar, r, &trial);
        let tn = tf.norm();
        if !(tn < fnorm) {
            break;
        }
        cur = trial;
        f = tf;
        fnorm = tn;
    }
    cur
}
