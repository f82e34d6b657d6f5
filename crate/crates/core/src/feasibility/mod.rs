//! Initial feasible points for `{Ax ≤ b, r_min ≤ ‖x‖ ≤ r_max}`.
//!
//! The minimum-norm point of the polytope is computed exactly (a convex
//! QP); a large-norm point is searched for by local maximization of `‖x‖²`
//! from several starts. A feasible point lies on the segment between them
//! whenever the maximization reaches `r_min`.


use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::activeset::ActiveSetOptions;
use crate::error::{Error, Result};
use crate::polish::least_squares;
use crate::problem::NormQP;
use crate::qpmode;

#[derive(Clone, Debug, PartialEq)]
pub enum FeasStatus {
    Feasible(DVector<f64>),
    /// The minimum-norm point of the polytope lies outside `r_max`.
    InfeasibleOuter,
    /// No point of norm `r_min` was found; not a proof of infeasibility.
    InfeasibleInnerHeuristic,
    /// The polytope is empty.
    InfeasibleCertified,
}

impl FeasStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeasStatus::Feasible(_) => "feasible",
            FeasStatus::InfeasibleOuter => "infeasible_outer",
            FeasStatus::InfeasibleInnerHeuristic => "infeasible_inner_heuristic",
            FeasStatus::InfeasibleCertified => "infeasible_certified",
        }
    }
}

#[derive(Clone, Debug)]
pub struct FeasResult {
    pub status: FeasStatus,
    pub x_min_norm: Option<DVector<f64>>,
    pub x_max_norm: Option<DVector<f64>>,
}

#[derive(Clone, Debug)]
pub struct FeasOptions {
    pub starts: usize,
    pub seed: u64,
}

impl Default for FeasOptions {
    fn default() -> Self {
        FeasOptions { starts: 8, seed: 0 }
    }
}

/// Minimum-norm point of `{Ax ≤ b}` by a dual active-set method (identity
/// Hessian). Returns `None` when the polytope is empty.
pub fn min_norm_point(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Option<DVector<f64>>> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::Dimension(format!("A has {m} rows but b has {}", b.len())));
    }
    let scale = b.amax().max(1.0);
    let viol_tol = 1e-12 * scale;
    let mut x = DVector::zeros(n);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let cap = 50 * (m + n) + 10;
    for _ in 0..cap {
        // most violated constraint, scaled by row norm
        let mut pick = None;
        let mut worst = viol_tol;
        for i in 0..m {
            if active.contains(&i) {
                continue;
            }
            let rn = a.row(i).norm();
            if rn == 0.0 {
                if b[i] < -viol_tol {
                    return Ok(None);
                }
                continue;
            }
            let v = (a.row(i).dot(&x.transpose()) - b[i]) / rn;
            if v > worst {
                worst = v;
                pick = Some(i);
            }
        }
        let Some(p) = pick else {
            return Ok(Some(x));
        };
        let ap = a.row(p).transpose();
        let mut up = 0.0;
        loop {
            let k = active.len();
            let mut nmat = DMatrix::zeros(n, k);
            for (c, &i) in active.iter().enumerate() {
                nmat.set_column(c, &a.row(i).transpose());
            }
            // r = N⁺ a_p, z = a_p − N r
            let r = if k == 0 {
                DVector::zeros(0)
            } else {
                least_squares(&nmat, &ap).unwrap_or_else(|| DVector::zeros(k))
            };
            let z = &ap - &nmat * &r;
            let slack = ap.dot(&x) - b[p];
            if slack <= viol_tol * ap.norm() {
                break;
            }
            let znorm2 = z.norm_squared();
            let t2 = if znorm2 > 1e-20 * ap.norm_squared() {
                slack / ap.dot(&z)
            } else {
                f64::INFINITY
            };
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for j in 0..k {
                if r[j] > 0.0 {
                    let t = u[j] / r[j];
                    if t < t1 {
                        t1 = t;
                        drop = Some(j);
                    }
                }
            }
            let t = t1.min(t2);
            if !t.is_finite() {
                return Ok(None);
            }
            for j in 0..k {
                u[j] -= t * r[j];
            }
            up += t;
            if t2.is_finite() {
                x -= &z * t;
            }
            if t2 <= t1 {
                active.push(p);
                u.push(up);
                break;
            }
            let j = drop.expect("finite partial step has a blocking multiplier");
            active.remove(j);
            u.remove(j);
        }
    }
    Err(Error::Internal("minimum-norm iteration did not terminate".into()))
}

/// Point of the segment from `x1` to `x2` with norm `target`, taking the
/// root closest to `x2`.
fn segment_point(x1: &DVector<f64>, x2: &DVector<f64>, target: f64) -> Option<DVector<f64>> {
    let d = x2 - x1;
    let a = d.norm_squared();
    let bq = 2.0 * x1.dot(&d);
    let c = x1.norm_squared() - target * target;
    if a == 0.0 {
        return None;
    }
    let disc = bq * bq - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let qq = -0.5 * (bq + bq.signum() * s);
    let mut roots = vec![];
    if qq != 0.0 {
        roots.push(qq / a);
        roots.push(c / qq);
    } else {
        roots.push(0.0);
    }
    let t = roots
        .into_iter()
        .filter(|t| (-1e-12..=1.0 + 1e-12).contains(t))
        .fold(None, |best: Option<f64>, t| Some(best.map_or(t, |b| b.max(t))))?;
    Some(x1 + d * t.clamp(0.0, 1.0))
}

/// Local maximizer of `‖x‖²` over `{Ax ≤ b, ‖x‖∞ ≤ box_half}` from `start`.
fn local_max_norm(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    box_half: f64,
    start: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    let mut aa = DMatrix::zeros(m + 2 * n, n);
    let mut bb = DVector::zeros(m + 2 * n);
    aa.view_mut((0, 0), (m, n)).copy_from(a);
    bb.rows_mut(0, m).copy_from(b);
    for i in 0..n {
        aa[(m + 2 * i, i)] = 1.0;
        aa[(m + 2 * i + 1, i)] = -1.0;
        bb[m + 2 * i] = box_half;
        bb[m + 2 * i + 1] = box_half;
    }
    let outer = 2.0 * box_half * (n as f64).sqrt() + start.norm() + 1.0;
    let prob = NormQP::new(-DMatrix::identity(n, n), DVector::zeros(n), aa, bb, 0.0, outer)?;
    let sol = qpmode::solve(&prob, start, &ActiveSetOptions::default())?;
    Ok(sol.x)
}

/// Random feasible starts: points part-way from `x_min` along random rays.
fn starts(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    box_half: f64,
    x_min: &DVector<f64>,
    opts: &FeasOptions,
) -> Vec<DVector<f64>> {
    let n = x_min.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = vec![x_min.clone()];
    for _ in 1..opts.starts {
        let d = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let mut t = f64::INFINITY;
        let ad = a * &d;
        let slack = b - a * x_min;
        for i in 0..a.nrows() {
            if ad[i] > 0.0 {
                t = t.min(slack[i].max(0.0) / ad[i]);
            }
        }
        for i in 0..n {
            if d[i] != 0.0 {
                let lim = if d[i] > 0.0 { box_half - x_min[i] } else { -box_half - x_min[i] };
                t = t.min((lim / d[i]).max(0.0));
            }
        }
        if t.is_finite() && t > 0.0 {
            out.push(x_min + d * (0.5 * t));
        }
    }
    out
}

/// Feasible point for `{Ax ≤ b, r_min ≤ ‖x‖ ≤ r_max}` or a reason why none
/// was found.
pub fn initial_point(a: &DMatrix<f64>, b: &DVector<f64>, r_min: f64, r_max: f64) -> Result<FeasResult> {
    initial_point_with(a, b, r_min, r_max, &FeasOptions::default())
}

pub fn initial_point_with(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    r_min: f64,
    r_max: f64,
    opts: &FeasOptions,
) -> Result<FeasResult> {
    if !(0.0 <= r_min && r_min <= r_max) {
        return Err(Error::InvalidInput(format!("bad radii [{r_min}, {r_max}]")));
    }
    let Some(x_min) = min_norm_point(a, b)? else {
        return Ok(FeasResult {
            status: FeasStatus::InfeasibleCertified,
            x_min_norm: None,
            x_max_norm: None,
        });
    };
    let nmin = x_min.norm();
    if nmin > r_max {
        return Ok(FeasResult {
            status: FeasStatus::InfeasibleOuter,
            x_min_norm: Some(x_min),
            x_max_norm: None,
        });
    }
    if nmin >= r_min {
        return Ok(FeasResult {
            status: FeasStatus::Feasible(x_min.clone()),
            x_min_norm: Some(x_min),
            x_max_norm: None,
        });
    }

    let mut best: Option<DVector<f64>> = None;
    for s in starts(a, b, r_min, &x_min, opts) {
        let x = match local_max_norm(a, b, r_min, &s) {
            Ok(x) => x,
            Err(_) => continue,
        };
        if best.as_ref().is_none_or(|bx| x.norm() > bx.norm()) {
            best = Some(x);
        }
        if best.as_ref().is_some_and(|bx| bx.norm() >= r_min) {
            break;
        }
    }
    let Some(x_max) = best else {
        return Ok(FeasResult {
            status: FeasStatus::InfeasibleInnerHeuristic,
            x_min_norm: Some(x_min),
            x_max_norm: None,
        });
    };
    let status = if x_max.norm() >= r_min {
        match segment_point(&x_min, &x_max, r_min) {
            Some(x0) => FeasStatus::Feasible(x0),
            None => FeasStatus::InfeasibleInnerHeuristic,
        }
    } else {
        FeasStatus::InfeasibleInnerHeuristic
    };
    Ok(FeasResult {
        status,
        x_min_norm: Some(x_min),
        x_max_norm: Some(x_max),
    })
}
