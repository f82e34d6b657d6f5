use nalgebra::{DMatrix, DVector};

use super::geometry::{circle_step, Circle, Slice, FEAS_TOL};
use super::multipliers::most_negative;
use super::{
    kkt_error, ls_multipliers, pgd, ActiveSetOptions, ArcOutcome, KktPoint, KktStatus, StepKind,
    TraceEvent, WorkingSet,
};
use crate::error::{Error, Result};
use crate::numerics::{sym_eig_dense, NullspaceProjector, RANK_TOL};
use crate::polish::{newton_polish, sphere_multipliers, Refined};
use crate::problem::NormQP;
use crate::trs::{solve_trs_with, TrsProblem};

/// Which bound the sphere of the current phase represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum NormSide {
    /// `r_min = r_max`: the multiplier is free.
    Fixed,
    Upper,
    Lower,
}

pub(crate) enum SphereExit {
    Done(KktPoint),
    /// The norm multiplier has the wrong sign and is the most negative one.
    Release { x: DVector<f64>, ws: WorkingSet },
}

/// Shared state of one solve: iteration counter and trace sink.
pub(crate) struct Ctx<'a> {
    pub prob: &'a NormQP,
    pub opts: &'a ActiveSetOptions,
    pub iter: usize,
    pub cap: usize,
    trace: &'a mut dyn FnMut(&TraceEvent),
}

impl<'a> Ctx<'a> {
    pub fn new(
        prob: &'a NormQP,
        opts: &'a ActiveSetOptions,
        trace: &'a mut dyn FnMut(&TraceEvent),
    ) -> Ctx<'a> {
        Ctx {
            prob,
            opts,
            iter: 0,
            cap: opts.iteration_cap(prob),
            trace,
        }
    }

    pub fn mono_tol(&self, f: f64) -> f64 {
        1e-12 * f.abs().max(1.0)
    }

    pub fn mult_tol(&self, x: &DVector<f64>) -> f64 {
        self.opts.mult_tol * self.prob.gradient(x).amax().max(1.0)
    }

    pub fn emit(&mut self, x: &DVector<f64>, ws: &WorkingSet, step: StepKind, dropped: Option<f64>) {
        let kkt_err = match ls_multipliers(self.prob, x, ws) {
            Some((kappa, mu)) => kkt_error(self.prob, x, &kappa, mu).total(),
            None => f64::NAN,
        };
        let ev = TraceEvent {
            iter: self.iter,
            working_set: ws.indices().to_vec(),
            norm_active: ws.norm_active,
            objective: self.prob.objective(x),
            step,
            kkt_err,
            dropped_multiplier: dropped,
        };
        (self.trace)(&ev);
    }

    pub fn finish(&self, x: DVector<f64>, ws: &WorkingSet, status: KktStatus) -> KktPoint {
        let (kappa, mu) =
            ls_multipliers(self.prob, &x, ws).unwrap_or_else(|| (DVector::zeros(self.prob.m()), 0.0));
        self.finish_with(x, ws, kappa, mu, status)
    }

    pub fn finish_with(
        &self,
        x: DVector<f64>,
        ws: &WorkingSet,
        kappa: DVector<f64>,
        mu: f64,
        status: KktStatus,
    ) -> KktPoint {
        let kkt_residual = kkt_error(self.prob, &x, &kappa, mu).total();
        KktPoint {
            objective: self.prob.objective(&x),
            x,
            kappa,
            mu,
            kkt_residual,
            status,
            iterations: self.iter,
            working_set: ws.indices().to_vec(),
        }
    }
}

/// Checks that `x0` is feasible for the sphere of radius `r` and that every
/// index of `w0` is active there; returns the working set and `x0` moved
/// onto its slice.
pub(crate) fn prepare_start(
    prob: &NormQP,
    r: Option<f64>,
    x0: &DVector<f64>,
    w0: &[usize],
) -> Result<(DVector<f64>, WorkingSet)> {
    if x0.len() != prob.n() {
        return Err(Error::Dimension(format!(
            "start point has length {}, expected {}",
            x0.len(),
            prob.n()
        )));
    }
    if let Some(r) = r {
        let nerr = (x0.norm_squared() - r * r).abs();
        if nerr > 1e-8 * (r * r).max(1.0) {
            return Err(Error::InfeasibleStart(format!(
                "start point norm {} differs from radius {r}",
                x0.norm()
            )));
        }
    }
    let slacks = prob.slacks(x0);
    if let Some((i, s)) = slacks.iter().enumerate().find(|(_, s)| **s > 1e-8) {
        return Err(Error::InfeasibleStart(format!("constraint {i} violated by {s:e}")));
    }
    let ws = WorkingSet::from_indices(prob, w0)?;
    for &i in ws.indices() {
        if slacks[i].abs() > 1e-8 * prob.b[i].abs().max(1.0) {
            return Err(Error::InfeasibleStart(format!(
                "working-set constraint {i} is not active at the start point"
            )));
        }
    }
    let x = match r {
        Some(r) => Slice::new(&ws, r).snap(&ws, x0),
        None => x0.clone(),
    };
    Ok((x, ws))
}

/// Active-set solve of `min f  s.t.  ‖x‖ = r, Ax ≤ b` for a problem with
/// `r_min = r_max = r`, from a feasible `x0` and initial working set `w0`.
pub fn solve_fixed_norm(
    prob: &NormQP,
    x0: &DVector<f64>,
    w0: &[usize],
    opts: &ActiveSetOptions,
) -> Result<KktPoint> {
    solve_fixed_norm_traced(prob, x0, w0, opts, &mut |_| {})
}

pub fn solve_fixed_norm_traced(
    prob: &NormQP,
    x0: &DVector<f64>,
    w0: &[usize],
    opts: &ActiveSetOptions,
    trace: &mut dyn FnMut(&TraceEvent),
) -> Result<KktPoint> {
    prob.validate()?;
    if prob.r_min != prob.r_max {
        return Err(Error::InvalidInput(
            "fixed-norm solve needs r_min = r_max".into(),
        ));
    }
    let r = prob.r_max;
    let (x, ws) = prepare_start(prob, Some(r), x0, w0)?;
    let mut ctx = Ctx::new(prob, opts, trace);
    match sphere_phase(&mut ctx, r, NormSide::Fixed, x, ws)? {
        SphereExit::Done(p) => Ok(p),
        SphereExit::Release { .. } => Err(Error::Internal("released a fixed sphere".into())),
    }
}

/// Minimizers of the working-set subproblem `min f  s.t.  Āx = b̄, ‖x‖ = r`,
/// global ones first.
fn subproblem_minimizers(
    ctx: &Ctx,
    ws: &WorkingSet,
    slice: &Slice,
    r: f64,
) -> Result<Vec<DVector<f64>>> {
    let prob = ctx.prob;
    let free = prob.n() - ws.len();
    if free <= 1 {
        let mut pts = vec![slice.center.clone()];
        if free == 1 {
            let z = ws.projector().nullspace_basis().column(0).into_owned();
            pts = vec![&slice.center + &z * slice.radius, &slice.center - &z * slice.radius];
            pts.sort_by(|a, b| prob.objective(a).total_cmp(&prob.objective(b)));
        }
        return Ok(pts);
    }
    let mut trs = TrsProblem::sphere(prob.p.clone(), prob.q.clone(), r);
    if !ws.is_empty() {
        trs = trs.with_equalities(ws.abar().clone(), ws.bbar().clone());
    }
    let out = solve_trs_with(&trs, &ctx.opts.trs)?;
    let mut pts = out.global_points;
    pts.extend(out.local_point);
    Ok(pts)
}

fn feasible_outside(prob: &NormQP, ws: &WorkingSet, x: &DVector<f64>) -> bool {
    prob.slacks(x)
        .iter()
        .enumerate()
        .all(|(i, s)| ws.contains(i) || *s <= FEAS_TOL)
}

/// Newton refinement of an approximate stationary point of the subproblem,
/// kept only if it stays feasible, does not raise `f`, and lowers the
/// projected gradient.
fn polish_stationary(
    ctx: &Ctx,
    ws: &WorkingSet,
    slice: &Slice,
    r: f64,
    x: DVector<f64>,
) -> DVector<f64> {
    let prob = ctx.prob;
    let Some((nu, mu)) = sphere_multipliers(&prob.p, &prob.q, ws.abar(), &x) else {
        return x;
    };
    let start = Refined {
        x: x.clone(),
        nu,
        mu,
    };
    let refined = newton_polish(&prob.p, &prob.q, ws.abar(), ws.bbar(), r, start, 1e-4 * r.max(1.0));
    let y = slice.snap(ws, &refined.x);
    let fx = prob.objective(&x);
    let gx = slice.tangent(ws, &x, &prob.gradient(&x)).norm();
    let gy = slice.tangent(ws, &y, &prob.gradient(&y)).norm();
    if feasible_outside(prob, ws, &y) && prob.objective(&y) <= fx + ctx.mono_tol(fx) && gy <= gx {
        y
    } else {
        x
    }
}

/// Eigenvector of the tangent-space Hessian `Zᵀ(P + μI)Z` for its most
/// negative eigenvalue, if that eigenvalue is below `-tol`.
fn negative_curvature(
    prob: &NormQP,
    ws: &WorkingSet,
    x: &DVector<f64>,
    mu: f64,
) -> Option<DVector<f64>> {
    let n = prob.n();
    let k = ws.len();
    let mut stacked = DMatrix::zeros(k + 1, n);
    stacked.view_mut((0, 0), (k, n)).copy_from(ws.abar());
    stacked.set_row(k, &x.transpose());
    let proj = NullspaceProjector::new(&stacked, RANK_TOL).ok()?;
    let z = proj.nullspace_basis();
    if z.ncols() == 0 {
        return None;
    }
    let mut h = z.transpose() * &prob.p * &z;
    for i in 0..h.nrows() {
        h[(i, i)] += mu;
    }
    let eig = sym_eig_dense(&h).ok()?;
    let tol = 1e-9 * prob.p.amax().max(mu.abs()).max(1.0);
    if eig.values[0] < -tol {
        Some(&z * eig.vectors.column(0))
    } else {
        None
    }
}

/// From a saddle `x_s` of the working-set subproblem, walk the circle
/// through `x_s` in the plane of `x_g − x_s` and the negative-curvature
/// direction; `x_g` is the (infeasible) global minimizer of the subproblem.
pub fn limiting_direction_escape(
    prob: &NormQP,
    x_s: &DVector<f64>,
    x_g: &DVector<f64>,
    ws: &WorkingSet,
) -> Result<ArcOutcome> {
    let (_, mu) = sphere_multipliers(&prob.p, &prob.q, ws.abar(), x_s)
        .ok_or_else(|| Error::RankDeficient {
            rank: ws.len(),
            rows: ws.len() + 1,
        })?;
    let d = negative_curvature(prob, ws, x_s, mu).ok_or_else(|| {
        Error::InvalidInput("projected Hessian has no negative eigenvalue".into())
    })?;
    let slice = Slice::new(ws, x_s.norm());
    Ok(escape_along(prob, ws, &slice, x_s, x_g, &d))
}

fn escape_along(
    prob: &NormQP,
    ws: &WorkingSet,
    slice: &Slice,
    x: &DVector<f64>,
    x_g: &DVector<f64>,
    d: &DVector<f64>,
) -> ArcOutcome {
    let planar = Circle::through(slice, ws, x, &[x_g - x, d.clone()])
        .and_then(|c| circle_step(prob, ws, &c));
    if let Some(step) = planar {
        return step;
    }
    let great = Circle::great(slice, x, d).and_then(|c| circle_step(prob, ws, &c));
    great.unwrap_or(ArcOutcome {
        x: x.clone(),
        blocking: None,
        theta: 0.0,
    })
}

enum Added {
    Ok,
    Licq,
}

fn add_constraint(
    ctx: &Ctx,
    ws: &mut WorkingSet,
    x: &mut DVector<f64>,
    r: f64,
    i: usize,
) -> Added {
    let mut next = ws.clone();
    if next.add(ctx.prob, i).is_err() {
        return Added::Licq;
    }
    let slice = Slice::new(&next, r);
    if slice.radius < 1e-8 * r {
        return Added::Licq;
    }
    *x = slice.snap(&next, x);
    *ws = next;
    Added::Ok
}

/// Active-set iterations with the norm constraint held at `‖x‖ = r`.
pub(crate) fn sphere_phase(
    ctx: &mut Ctx,
    r: f64,
    side: NormSide,
    mut x: DVector<f64>,
    mut ws: WorkingSet,
) -> Result<SphereExit> {
    let prob = ctx.prob;
    ws.norm_active = true;
    x = Slice::new(&ws, r).snap(&ws, &x);
    loop {
        if ctx.iter >= ctx.cap {
            return Ok(SphereExit::Done(ctx.finish(x, &ws, KktStatus::IterationCap)));
        }
        ctx.iter += 1;
        let slice = Slice::new(&ws, r);
        if slice.radius < 1e-8 * r {
            return Ok(SphereExit::Done(ctx.finish(x, &ws, KktStatus::LicqFailure)));
        }

        // warm-up gradient steps
        let pre = pgd::run(prob, &ws, &slice, &x, ctx.opts.pre_pgd_steps, ctx.opts.pgd_tol);
        x = pre.x;
        if let Some(i) = pre.hit {
            if let Added::Licq = add_constraint(ctx, &mut ws, &mut x, r, i) {
                return Ok(SphereExit::Done(ctx.finish(x, &ws, KktStatus::LicqFailure)));
            }
            ctx.emit(&x, &ws, StepKind::PreGradient, None);
            continue;
        }

        let fx = prob.objective(&x);
        let cands = subproblem_minimizers(ctx, &ws, &slice, r)?;
        let jump = cands
            .iter()
            .find(|c| feasible_outside(prob, &ws, c) && prob.objective(c) <= fx + ctx.mono_tol(fx))
            .cloned();

        if let Some(c) = jump {
            x = slice.snap(&ws, &c);
        } else if !cands.is_empty() {
            let x_g = cands[0].clone();
            let g = prob.gradient(&x);
            let gt = slice.tangent(&ws, &x, &g);
            let dirs = if cands.len() >= 2 {
                vec![&cands[0] - &x, &cands[1] - &x]
            } else {
                vec![&x_g - &x, -gt]
            };
            let arc = Circle::through(&slice, &ws, &x, &dirs).and_then(|c| circle_step(prob, &ws, &c));
            if let Some(step) = arc {
                if prob.objective(&step.x) <= fx + ctx.mono_tol(fx) {
                    x = step.x;
                    if let Some(i) = step.blocking {
                        if let Added::Licq = add_constraint(ctx, &mut ws, &mut x, r, i) {
                            return Ok(SphereExit::Done(ctx.finish(x, &ws, KktStatus::LicqFailure)));
                        }
                        ctx.emit(&x, &ws, StepKind::Arc, None);
                        continue;
                    }
                }
            }

            let run = pgd::run(prob, &ws, &slice, &x, ctx.opts.pgd_max_steps, ctx.opts.pgd_tol);
            x = run.x;
            if let Some(i) = run.hit {
                if let Added::Licq = add_constraint(ctx, &mut ws, &mut x, r, i) {
                    return Ok(SphereExit::Done(ctx.finish(x, &ws, KktStatus::LicqFailure)));
                }
                ctx.emit(&x, &ws, StepKind::Gradient, None);
                continue;
            }
            x = polish_stationary(ctx, &ws, &slice, r, x);

            let Some((_, mu)) = sphere_multipliers(&prob.p, &prob.q, ws.abar(), &x) else {
                return Ok(SphereExit::Done(ctx.finish(x, &ws, KktStatus::LicqFailure)));
            };
            if let Some(d) = negative_curvature(prob, &ws, &x, mu) {
                let fs = prob.objective(&x);
                let step = escape_along(prob, &ws, &slice, &x, &x_g, &d);
                if prob.objective(&step.x) <= fs + ctx.mono_tol(fs)
                    && (&step.x - &x).norm() > 1e-12 * r
                {
                    x = step.x;
                    if let Some(i) = step.blocking {
                        if let Added::Licq = add_constraint(ctx, &mut ws, &mut x, r, i) {
                            return Ok(SphereExit::Done(ctx.finish(x, &ws, KktStatus::LicqFailure)));
                        }
                    }
                    ctx.emit(&x, &ws, StepKind::Escape, None);
                    continue;
                }
            }
        }

        // x is stationary for the working-set subproblem
        let Some((kappa, mu)) = ls_multipliers(prob, &x, &ws) else {
            return Ok(SphereExit::Done(ctx.finish(x, &ws, KktStatus::LicqFailure)));
        };
        let tol = ctx.mult_tol(&x);
        let mu_eff = match side {
            NormSide::Fixed => f64::INFINITY,
            NormSide::Upper => mu,
            NormSide::Lower => -mu,
        };
        let neg = most_negative(&kappa, &ws);
        let kmin = neg.map_or(f64::INFINITY, |(_, k)| k);
        if mu_eff < -tol && mu_eff < kmin - tol {
            return Ok(SphereExit::Release { x, ws });
        }
        if let Some((j, k)) = neg {
            if k < -tol {
                ws.remove(prob, j)?;
                ctx.emit(&x, &ws, StepKind::Drop(j), Some(k));
                continue;
            }
        }
        ctx.emit(&x, &ws, StepKind::Stationary, None);
        return Ok(SphereExit::Done(ctx.finish_with(x, &ws, kappa, mu, KktStatus::Optimal)));
    }
}
