//! Driver for `r_min ≤ ‖x‖ ≤ r_max`: sphere-mode active-set iterations while
//! a norm bound is active, and a generic nonconvex QP active-set method
//! while both bounds are slack.


use nalgebra::DVector;

use crate::activeset::engine::prepare_start;
use crate::activeset::multipliers::most_negative;
use crate::activeset::{
    ls_multipliers, solve_fixed_norm_traced, ActiveSetOptions, Ctx, KktPoint, KktStatus, NormSide,
    SphereExit, StepKind, TraceEvent, WorkingSet,
};
use crate::error::{Error, Result};
use crate::numerics::sym_eig_dense;
use crate::problem::NormQP;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    SphereMin,
    SphereMax,
    Interior,
}

#[derive(Clone, Debug)]
pub struct ModeState {
    pub mode: Mode,
    pub x: DVector<f64>,
    pub ws: WorkingSet,
    pub switch_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    Min,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpEvent {
    HitSphere(Bound),
    Stationary,
    HitInequality(usize),
}

#[derive(Clone, Debug)]
pub struct QpStep {
    pub x: DVector<f64>,
    pub event: QpEvent,
}

/// Constraint released at the previous iteration; a step blocked by it at
/// zero length falls back to the projected steepest-descent direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Released {
    Row(usize),
    Sphere,
}

struct Direction {
    d: DVector<f64>,
    /// Largest useful step; `f64::INFINITY` for unbounded descent rays.
    max_step: f64,
}

fn curvature_tol(prob: &NormQP) -> f64 {
    1e-10 * prob.p.amax().max(1.0)
}

/// Step direction for the equality-constrained QP on the working set.
fn eqp_direction(prob: &NormQP, x: &DVector<f64>, ws: &WorkingSet) -> Result<Option<Direction>> {
    let z = ws.projector().nullspace_basis();
    if z.ncols() == 0 {
        return Ok(None);
    }
    let g = prob.gradient(x);
    let gz = z.transpose() * &g;
    let h = z.transpose() * &prob.p * &z;
    let eig = sym_eig_dense(&h)?;
    let tol = curvature_tol(prob);
    let gtol = 1e-12 * g.amax().max(1.0);
    let lmin = eig.values[0];
    if lmin < -tol {
        let mut d = &z * eig.vectors.column(0);
        if g.dot(&d) > 0.0 {
            d = -d;
        }
        return Ok(Some(Direction {
            d,
            max_step: f64::INFINITY,
        }));
    }
    // kernel and range parts of the projected Hessian
    let mut y = DVector::zeros(z.ncols());
    let mut kernel_grad = DVector::zeros(z.ncols());
    for (j, &lam) in eig.values.iter().enumerate() {
        let v = eig.vectors.column(j);
        let c = v.dot(&gz);
        if lam <= tol {
            kernel_grad += v * c;
        } else {
            y -= v * (c / lam);
        }
    }
    if kernel_grad.norm() > gtol {
        return Ok(Some(Direction {
            d: -(&z * kernel_grad),
            max_step: f64::INFINITY,
        }));
    }
    let d = &z * y;
    if d.norm() <= 1e-14 * x.norm().max(1.0) {
        return Ok(None);
    }
    Ok(Some(Direction { d, max_step: 1.0 }))
}

/// Projected steepest descent with exact line search along the ray.
fn descent_direction(prob: &NormQP, x: &DVector<f64>, ws: &WorkingSet) -> Option<Direction> {
    let g = prob.gradient(x);
    let d = -ws.projector().project(&g);
    let slope = g.dot(&d);
    if slope >= 0.0 || d.norm() <= 1e-14 * g.norm().max(1.0) {
        return None;
    }
    let curv = d.dot(&(&prob.p * &d));
    let max_step = if curv > 0.0 { -slope / curv } else { f64::INFINITY };
    Some(Direction { d, max_step })
}

/// Roots of `a t² + b t + c` in ascending order, computed stably.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 || a == 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let q = -0.5 * (b + b.signum() * s);
    let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    Some((r1.min(r2), r1.max(r2)))
}

#[derive(Clone, Copy, Debug)]
enum Blocker {
    Row(usize),
    Sphere(Bound),
}

/// Ratio test along `x + t d`, `t ∈ [0, max_step]`, over the inequalities
/// outside the working set and both norm bounds.
fn ratio_test(
    prob: &NormQP,
    x: &DVector<f64>,
    ws: &WorkingSet,
    d: &DVector<f64>,
    max_step: f64,
) -> (f64, Option<Blocker>) {
    let mut best = max_step;
    let mut who = None;
    let ad = &prob.a * d;
    let slack = prob.slacks(x);
    for i in 0..prob.m() {
        if ws.contains(i) || ad[i] <= 1e-14 * prob.a.row(i).norm() * d.norm() {
            continue;
        }
        let t = (-slack[i]).max(0.0) / ad[i];
        if t < best {
            best = t;
            who = Some(Blocker::Row(i));
        }
    }
    let a = d.norm_squared();
    let b = 2.0 * x.dot(d);
    let nrm2 = x.norm_squared();
    if let Some((_, hi)) = quadratic_roots(a, b, nrm2 - prob.r_max * prob.r_max) {
        let t = hi.max(0.0);
        if t < best {
            best = t;
            who = Some(Blocker::Sphere(Bound::Max));
        }
    }
    if prob.r_min > 0.0 && b < 0.0 {
        if let Some((lo, _)) = quadratic_roots(a, b, nrm2 - prob.r_min * prob.r_min) {
            let t = lo.max(0.0);
            if t < best {
                best = t;
                who = Some(Blocker::Sphere(Bound::Min));
            }
        }
    }
    (best, who)
}

/// One primal active-set step on the QP without the norm constraint,
/// with both norm bounds included in the ratio test.
pub fn qp_active_set_step(prob: &NormQP, x: &DVector<f64>, ws: &WorkingSet) -> Result<QpStep> {
    step_with(prob, x, ws, None)
}

fn step_with(
    prob: &NormQP,
    x: &DVector<f64>,
    ws: &WorkingSet,
    released: Option<Released>,
) -> Result<QpStep> {
    let Some(mut dir) = eqp_direction(prob, x, ws)? else {
        return Ok(QpStep {
            x: x.clone(),
            event: QpEvent::Stationary,
        });
    };
    let (mut t, mut who) = ratio_test(prob, x, ws, &dir.d, dir.max_step);
    let blocked_by_released = match (who, released) {
        (Some(Blocker::Row(i)), Some(Released::Row(j))) => i == j,
        (Some(Blocker::Sphere(_)), Some(Released::Sphere)) => true,
        _ => false,
    };
    if blocked_by_released && t * dir.d.norm() <= 1e-12 * x.norm().max(1.0) {
        if let Some(sd) = descent_direction(prob, x, ws) {
            dir = sd;
            (t, who) = ratio_test(prob, x, ws, &dir.d, dir.max_step);
        }
    }
    if !t.is_finite() {
        return Err(Error::Internal("unbounded step inside a bounded ball".into()));
    }
    let xn = x + &dir.d * t;
    let event = match who {
        Some(Blocker::Row(i)) => QpEvent::HitInequality(i),
        Some(Blocker::Sphere(b)) => QpEvent::HitSphere(b),
        None => QpEvent::Stationary,
    };
    Ok(QpStep { x: xn, event })
}

/// Solve `min f  s.t.  r_min ≤ ‖x‖ ≤ r_max, Ax ≤ b` from a feasible `x0`.
pub fn solve(prob: &NormQP, x0: &DVector<f64>, opts: &ActiveSetOptions) -> Result<KktPoint> {
    solve_traced(prob, x0, &[], opts, &mut |_| {}).map(|(p, _)| p)
}

/// As [`solve`], with an initial working set and a trace callback; also
/// returns the final mode state.
pub fn solve_traced(
    prob: &NormQP,
    x0: &DVector<f64>,
    w0: &[usize],
    opts: &ActiveSetOptions,
    trace: &mut dyn FnMut(&TraceEvent),
) -> Result<(KktPoint, ModeState)> {
    prob.validate()?;
    if prob.r_min == prob.r_max {
        let p = solve_fixed_norm_traced(prob, x0, w0, opts, trace)?;
        let mut ws = WorkingSet::from_indices(prob, &p.working_set)?;
        ws.norm_active = true;
        let state = ModeState {
            mode: Mode::SphereMax,
            x: p.x.clone(),
            ws,
            switch_count: 0,
        };
        return Ok((p, state));
    }

    if x0.len() != prob.n() {
        return Err(Error::Dimension(format!(
            "start point has length {}, expected {}",
            x0.len(),
            prob.n()
        )));
    }
    let nrm = x0.norm();
    let near = |r: f64| (nrm * nrm - r * r).abs() <= 1e-9 * (r * r).max(1.0);
    let mut mode = if near(prob.r_max) {
        Mode::SphereMax
    } else if prob.r_min > 0.0 && near(prob.r_min) {
        Mode::SphereMin
    } else {
        Mode::Interior
    };
    if mode == Mode::Interior
        && (nrm > prob.r_max * (1.0 + 1e-9) || nrm < prob.r_min * (1.0 - 1e-9))
    {
        return Err(Error::InfeasibleStart(format!(
            "start norm {nrm} outside [{}, {}]",
            prob.r_min, prob.r_max
        )));
    }
    let radius = match mode {
        Mode::SphereMax => Some(prob.r_max),
        Mode::SphereMin => Some(prob.r_min),
        Mode::Interior => None,
    };
    let (mut x, mut ws) = prepare_start(prob, radius, x0, w0)?;

    let mut ctx = Ctx::new(prob, opts, trace);
    let mut switches = 0;
    let mut released: Option<Released> = None;
    loop {
        match mode {
            Mode::SphereMax | Mode::SphereMin => {
                let (r, side) = if mode == Mode::SphereMax {
                    (prob.r_max, NormSide::Upper)
                } else {
                    (prob.r_min, NormSide::Lower)
                };
                match crate::activeset::engine::sphere_phase(&mut ctx, r, side, x, ws)? {
                    SphereExit::Done(p) => {
                        let mut ws = WorkingSet::from_indices(prob, &p.working_set)?;
                        ws.norm_active = true;
                        let state = ModeState {
                            mode,
                            x: p.x.clone(),
                            ws,
                            switch_count: switches,
                        };
                        return Ok((p, state));
                    }
                    SphereExit::Release { x: xr, ws: wr } => {
                        x = xr;
                        ws = wr;
                        ws.norm_active = false;
                        mode = Mode::Interior;
                        switches += 1;
                        released = Some(Released::Sphere);
                        ctx.emit(&x, &ws, StepKind::ModeSwitch, None);
                    }
                }
            }
            Mode::Interior => {
                ws.norm_active = false;
                if ctx.iter >= ctx.cap {
                    let p = ctx.finish(x.clone(), &ws, KktStatus::IterationCap);
                    return Ok((p, interior_state(x, ws, switches)));
                }
                ctx.iter += 1;
                let step = step_with(prob, &x, &ws, released.take())?;
                x = step.x;
                match step.event {
                    QpEvent::HitInequality(i) => {
                        if ws.add(prob, i).is_err() {
                            let p = ctx.finish(x.clone(), &ws, KktStatus::LicqFailure);
                            return Ok((p, interior_state(x, ws, switches)));
                        }
                        x = ws_snap(&ws, &x);
                        ctx.emit(&x, &ws, StepKind::Interior, None);
                    }
                    QpEvent::HitSphere(b) => {
                        mode = match b {
                            Bound::Max => Mode::SphereMax,
                            Bound::Min => Mode::SphereMin,
                        };
                        switches += 1;
                        ws.norm_active = true;
                        ctx.emit(&x, &ws, StepKind::ModeSwitch, None);
                    }
                    QpEvent::Stationary => {
                        let Some((kappa, _)) = ls_multipliers(prob, &x, &ws) else {
                            let p = ctx.finish(x.clone(), &ws, KktStatus::LicqFailure);
                            return Ok((p, interior_state(x, ws, switches)));
                        };
                        let tol = ctx.mult_tol(&x);
                        match most_negative(&kappa, &ws) {
                            Some((j, k)) if k < -tol => {
                                ws.remove(prob, j)?;
                                released = Some(Released::Row(j));
                                ctx.emit(&x, &ws, StepKind::Drop(j), Some(k));
                            }
                            _ => {
                                ctx.emit(&x, &ws, StepKind::Stationary, None);
                                let p = ctx.finish_with(x.clone(), &ws, kappa, 0.0, KktStatus::Optimal);
                                return Ok((p, interior_state(x, ws, switches)));
                            }
                        }
                    }
                }
            }
        }
    }
}

fn interior_state(x: DVector<f64>, ws: WorkingSet, switch_count: usize) -> ModeState {
    ModeState {
        mode: Mode::Interior,
        x,
        ws,
        switch_count,
    }
}

/// Removes rounding drift off the working-set equalities.
fn ws_snap(ws: &WorkingSet, x: &DVector<f64>) -> DVector<f64> {
    if ws.is_empty() {
        return x.clone();
    }
    let resid = ws.abar() * x - ws.bbar();
    x - ws.projector().min_norm_solution(&resid)
}
