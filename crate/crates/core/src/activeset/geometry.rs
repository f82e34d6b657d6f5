//! Circles on the feasible sphere slice `{Āx = b̄, ‖x‖ = r}` and the
//! constraint-aware arc walk used by the 2D subproblems and by projected
//! gradient steps.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use super::WorkingSet;
use crate::problem::NormQP;
use crate::trs::{solve_trs_with, TrsOptions, TrsProblem};

/// Feasibility slack accepted for constraints outside the working set.
pub(crate) const FEAS_TOL: f64 = 1e-10;

/// `{Āx = b̄} ∩ {‖x‖ = r}` as a sphere of radius `radius` centred at `center`
/// inside the affine slice.
#[derive(Clone, Debug)]
pub(crate) struct Slice {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl Slice {
    pub fn new(ws: &WorkingSet, r: f64) -> Slice {
        let center = ws.projector().min_norm_solution(ws.bbar());
        let radius = (r * r - center.norm_squared()).max(0.0).sqrt();
        Slice { center, radius }
    }

    /// Closest point of the slice sphere to `x`.
    pub fn snap(&self, ws: &WorkingSet, x: &DVector<f64>) -> DVector<f64> {
        let d = ws.projector().project(&(x - &self.center));
        let nrm = d.norm();
        if nrm == 0.0 {
            return x.clone();
        }
        &self.center + d * (self.radius / nrm)
    }

    /// Projection of `g` onto the tangent space of the slice sphere at `x`.
    pub fn tangent(&self, ws: &WorkingSet, x: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
        let pg = ws.projector().project(g);
        let u = ws.projector().project(&(x - &self.center));
        let nu = u.norm_squared();
        if nu == 0.0 {
            return pg;
        }
        let t = &pg - &u * (u.dot(&pg) / nu);
        ws.projector().project(&t)
    }
}

/// `x(θ) = c + ρ(u cos θ + v sin θ)`, with `x(0)` the current iterate.
#[derive(Clone, Debug)]
pub(crate) struct Circle {
    pub c: DVector<f64>,
    pub rho: f64,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
}

impl Circle {
    pub fn point(&self, theta: f64) -> DVector<f64> {
        &self.c + (&self.u * theta.cos() + &self.v * theta.sin()) * self.rho
    }

    /// Circle cut from the sphere `‖x‖ = r` by the affine plane through
    /// `x` spanned by `dirs` (which must lie in the working-set nullspace).
    /// When the directions span a single line, the radial direction of the
    /// slice is added so that the circle is a great circle of the slice.
    pub fn through(
        slice: &Slice,
        ws: &WorkingSet,
        x: &DVector<f64>,
        dirs: &[DVector<f64>],
    ) -> Option<Circle> {
        let scale = x.norm().max(1.0);
        let mut basis: Vec<DVector<f64>> = Vec::new();
        let push = |d: DVector<f64>, basis: &mut Vec<DVector<f64>>| {
            let mut d = ws.projector().project(&d);
            let orig = d.norm();
            if orig <= 1e-12 * scale {
                return;
            }
            for _ in 0..2 {
                for b in basis.iter() {
                    let c = b.dot(&d);
                    d.axpy(-c, b, 1.0);
                }
            }
            let nrm = d.norm();
            if nrm > 1e-8 * orig && basis.len() < 2 {
                basis.push(d / nrm);
            }
        };
        for d in dirs {
            push(d.clone(), &mut basis);
        }
        if basis.is_empty() {
            return None;
        }
        if basis.len() == 1 {
            push(x - &slice.center, &mut basis);
        }
        if basis.len() < 2 {
            return None;
        }
        let e1 = &basis[0];
        let e2 = &basis[1];
        let c = x - e1 * e1.dot(x) - e2 * e2.dot(x);
        let radial = x - &c;
        let rho = radial.norm();
        if rho <= 1e-12 * scale {
            return None;
        }
        let u = radial / rho;
        let mut v = e1 - &u * u.dot(e1);
        if v.norm() < 0.5 {
            v = e2 - &u * u.dot(e2);
        }
        let v = v.normalize();
        Some(Circle { c, rho, u, v })
    }

    /// Great circle of the slice sphere through `x` heading along `dir`.
    pub fn great(slice: &Slice, x: &DVector<f64>, dir: &DVector<f64>) -> Option<Circle> {
        let radial = x - &slice.center;
        let rho = radial.norm();
        if rho == 0.0 {
            return None;
        }
        let u = radial / rho;
        let v = dir - &u * u.dot(dir);
        let nv = v.norm();
        if nv == 0.0 {
            return None;
        }
        Some(Circle {
            c: slice.center.clone(),
            rho,
            u,
            v: v / nv,
        })
    }

    /// `f(x(θ)) = k0 + k1 cos θ + k2 sin θ + k3 cos 2θ + k4 sin 2θ`.
    pub fn restrict(&self, prob: &NormQP) -> ArcFn {
        let pc = &prob.p * &self.c;
        let pu = &prob.p * &self.u;
        let pv = &prob.p * &self.v;
        let huu = self.u.dot(&pu) * self.rho * self.rho;
        let hvv = self.v.dot(&pv) * self.rho * self.rho;
        let huv = self.u.dot(&pv) * self.rho * self.rho;
        let gu = self.u.dot(&(&pc + &prob.q)) * self.rho;
        let gv = self.v.dot(&(&pc + &prob.q)) * self.rho;
        let f0 = 0.5 * self.c.dot(&pc) + prob.q.dot(&self.c);
        ArcFn {
            k: [
                f0 + 0.25 * (huu + hvv),
                gu,
                gv,
                0.25 * (huu - hvv),
                0.5 * huv,
            ],
        }
    }
}

/// Objective restricted to a circle as a degree-two trigonometric polynomial.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ArcFn {
    pub k: [f64; 5],
}

impl ArcFn {
    pub fn value(&self, t: f64) -> f64 {
        let k = &self.k;
        k[0] + k[1] * t.cos() + k[2] * t.sin() + k[3] * (2.0 * t).cos() + k[4] * (2.0 * t).sin()
    }

    pub fn deriv(&self, t: f64) -> f64 {
        let k = &self.k;
        -k[1] * t.sin() + k[2] * t.cos() - 2.0 * k[3] * (2.0 * t).sin() + 2.0 * k[4] * (2.0 * t).cos()
    }

    pub fn second(&self, t: f64) -> f64 {
        let k = &self.k;
        -k[1] * t.cos() - k[2] * t.sin() - 4.0 * k[3] * (2.0 * t).cos() - 4.0 * k[4] * (2.0 * t).sin()
    }

    pub fn scale(&self) -> f64 {
        self.k[1..].iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE)
    }

    /// First local minimizer of `θ ↦ f(sθ)` in `(0, limit]`, assuming the
    /// function initially decreases; returns `limit` if none is found.
    pub fn first_min(&self, s: f64, limit: f64) -> f64 {
        let steps = 720;
        let h = limit / steps as f64;
        let d = |t: f64| s * self.deriv(s * t);
        let mut prev = 0.0;
        for i in 1..=steps {
            let t = i as f64 * h;
            if d(t) >= 0.0 {
                let (mut lo, mut hi) = (prev, t);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if d(mid) >= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return hi;
            }
            prev = t;
        }
        limit
    }
}

/// End point of an arc walk and the constraint that stopped it, if any.
#[derive(Clone, Debug)]
pub struct ArcOutcome {
    pub x: DVector<f64>,
    pub blocking: Option<usize>,
    /// Arc parameter travelled.
    pub theta: f64,
}

/// First inequality outside the working set that becomes violated when
/// walking `θ ∈ [0, limit]` in direction `s` along the circle. Ties in `θ`
/// go to the lowest index.
pub(crate) fn first_blocking(
    prob: &NormQP,
    ws: &WorkingSet,
    circle: &Circle,
    s: f64,
    limit: f64,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..prob.m() {
        if ws.contains(i) {
            continue;
        }
        let a = prob.a.row(i).transpose();
        let k = a.dot(&circle.c) - prob.b[i];
        let ca = a.dot(&circle.u) * circle.rho;
        let cb = a.dot(&circle.v) * circle.rho;
        let amp = ca.hypot(cb);
        let scale = (a.norm() * circle.c.norm().max(circle.rho)).max(prob.b[i].abs()).max(1.0);
        if amp <= 1e-14 * scale {
            continue;
        }
        let h0 = k + ca;
        let slope0 = s * cb;
        let theta = if h0 >= -FEAS_TOL && slope0 > 1e-13 * amp {
            Some(0.0)
        } else {
            let kappa = -k / amp;
            if kappa.abs() > 1.0 {
                None
            } else {
                let phi = cb.atan2(ca);
                let beta = kappa.acos();
                let mut first: Option<f64> = None;
                for base in [phi + beta, phi - beta] {
                    for j in -2..=2 {
                        let t = s * (base + TAU * j as f64);
                        if t <= 1e-15 || t > limit * (1.0 + 1e-12) {
                            continue;
                        }
                        // crossing into violation
                        let slope = -s * amp * (s * t - phi).sin();
                        if slope <= 0.0 {
                            continue;
                        }
                        if first.is_none_or(|f| t < f) {
                            first = Some(t);
                        }
                    }
                }
                first.map(|t| t.min(limit))
            }
        };
        if let Some(t) = theta {
            let better = match best {
                None => true,
                Some((_, bt)) => t < bt - 1e-14 * bt.max(1.0),
            };
            if better {
                best = Some((i, t));
            }
        }
    }
    best
}

/// Walk from `x(0)` in direction `s` up to `target` (or the first blocking
/// constraint before it).
pub(crate) fn walk_arc(
    prob: &NormQP,
    ws: &WorkingSet,
    circle: &Circle,
    s: f64,
    target: f64,
) -> ArcOutcome {
    match first_blocking(prob, ws, circle, s, target) {
        Some((i, t)) => ArcOutcome {
            x: circle.point(s * t),
            blocking: Some(i),
            theta: t,
        },
        None => ArcOutcome {
            x: circle.point(s * target),
            blocking: None,
            theta: target,
        },
    }
}

/// The 2D subproblem on a circle: locate the circle's minimizers with a
/// 2-variable TRS, choose a descending arc from `x(0)` towards one of them,
/// make sure the arc is monotone, and walk it until a constraint blocks.
/// Returns `None` when no arc descends from the current point.
pub(crate) fn circle_step(
    prob: &NormQP,
    ws: &WorkingSet,
    circle: &Circle,
) -> Option<ArcOutcome> {
    let arc = circle.restrict(prob);
    let scale = arc.scale();
    let d0 = arc.deriv(0.0);
    let dtol = 1e-12 * scale;
    let mut dirs: Vec<f64> = Vec::new();
    if d0 < -dtol {
        dirs.push(1.0);
    } else if d0 > dtol {
        dirs.push(-1.0);
    } else if arc.second(0.0) < -dtol {
        dirs.push(1.0);
        dirs.push(-1.0);
    }
    if dirs.is_empty() {
        return None;
    }

    // minimizers of the circle restriction via the 2D TRS
    let b = DMatrix::from_columns(&[circle.u.clone(), circle.v.clone()]);
    let p2 = b.transpose() * &prob.p * &b;
    let p2 = (&p2 + p2.transpose()) * 0.5;
    let q2 = b.transpose() * (&prob.p * &circle.c + &prob.q);
    let mut angles: Vec<f64> = Vec::new();
    let constant = (p2[(0, 0)] - p2[(1, 1)]).abs() <= 1e-14 * p2.amax().max(1.0)
        && p2[(0, 1)].abs() <= 1e-14 * p2.amax().max(1.0)
        && q2.norm() <= 1e-14 * (p2.amax() * circle.rho).max(1.0);
    if constant {
        return None;
    }
    let trs = TrsProblem::sphere(p2, q2, circle.rho);
    if let Ok(out) = solve_trs_with(&trs, &TrsOptions::default()) {
        for y in out.global_points.iter().chain(out.local_point.iter()) {
            angles.push(y[1].atan2(y[0]).rem_euclid(TAU));
        }
    }

    let mut best: Option<(f64, f64, f64)> = None; // (value, s, target)
    for &s in &dirs {
        let mut target = TAU;
        for &phi in &angles {
            let t = (s * phi).rem_euclid(TAU);
            if t > 1e-12 && t < target {
                target = t;
            }
        }
        // guard against missed stationary points: stop at the first minimum
        let t = arc.first_min(s, target);
        let val = arc.value(s * t);
        let better = match best {
            None => true,
            Some((bv, _, bt)) => val < bv - 1e-14 * scale || (val <= bv + 1e-14 * scale && t < bt),
        };
        if better {
            best = Some((val, s, t));
        }
    }
    let (_, s, target) = best?;
    Some(walk_arc(prob, ws, circle, s, target))
}

/// The 2D subproblem on the circle through `x_k`, `p1` and `p2` (all on the
/// sphere `‖x‖ = ‖x_k‖` and satisfying the working-set equalities). When the
/// three points span only a line, the great circle of the slice through
/// them is used instead. Returns `x_k` unchanged when no arc descends.
pub fn two_dim_subproblem(
    prob: &NormQP,
    ws: &WorkingSet,
    x_k: &DVector<f64>,
    p1: &DVector<f64>,
    p2: &DVector<f64>,
) -> ArcOutcome {
    let slice = Slice::new(ws, x_k.norm());
    let stay = ArcOutcome {
        x: x_k.clone(),
        blocking: None,
        theta: 0.0,
    };
    let Some(circle) = Circle::through(&slice, ws, x_k, &[p1 - x_k, p2 - x_k]) else {
        return stay;
    };
    circle_step(prob, ws, &circle).unwrap_or(stay)
}
