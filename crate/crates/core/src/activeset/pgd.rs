use std::f64::consts::PI;

use nalgebra::DVector;

use super::geometry::{first_blocking, Circle, Slice};
use super::{ActiveSetOptions, WorkingSet};
use crate::problem::NormQP;

const ARMIJO: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct PgdResult {
    pub x: DVector<f64>,
    /// Inequality that would have been violated by the next step.
    pub hit: Option<usize>,
    pub converged: bool,
    pub steps: usize,
}

/// Projected gradient descent on `{Āx = b̄, ‖x‖ = r}` (with `r = ‖x_start‖`)
/// until an inactive inequality is hit or the projected gradient vanishes.
pub fn projected_gradient_descent(
    prob: &NormQP,
    x_start: &DVector<f64>,
    ws: &WorkingSet,
    opts: &ActiveSetOptions,
) -> PgdResult {
    let slice = Slice::new(ws, x_start.norm());
    run(prob, ws, &slice, x_start, opts.pgd_max_steps, opts.pgd_tol)
}

/// At most `k_steps` projected gradient steps.
pub fn pre_iteration_pgd(
    prob: &NormQP,
    x: &DVector<f64>,
    ws: &WorkingSet,
    k_steps: usize,
) -> PgdResult {
    let slice = Slice::new(ws, x.norm());
    run(prob, ws, &slice, x, k_steps, ActiveSetOptions::default().pgd_tol)
}

pub(crate) fn run(
    prob: &NormQP,
    ws: &WorkingSet,
    slice: &Slice,
    x_start: &DVector<f64>,
    max_steps: usize,
    tol: f64,
) -> PgdResult {
    let mut x = x_start.clone();
    let mut fx = prob.objective(&x);
    for step in 0..max_steps {
        let g = prob.gradient(&x);
        let gt = slice.tangent(ws, &x, &g);
        let gn = gt.norm();
        if gn <= tol * g.norm().max(1.0) {
            return PgdResult {
                x,
                hit: None,
                converged: true,
                steps: step,
            };
        }
        let Some(circle) = Circle::great(slice, &x, &(-&gt)) else {
            return PgdResult {
                x,
                hit: None,
                converged: true,
                steps: step,
            };
        };
        let arc = circle.restrict(prob);
        let cap = arc.first_min(1.0, PI);
        let mut eta = 1.0;
        let mut accepted = None;
        while eta > 1e-30 {
            let theta = (eta * gn / circle.rho).atan().min(cap);
            let eff = circle.rho * theta.tan() / gn;
            let trial = circle.point(theta);
            let ft = prob.objective(&trial);
            if ft <= fx - ARMIJO * eff * gn * gn {
                accepted = Some((theta, trial, ft));
                break;
            }
            eta *= 0.5;
        }
        let Some((theta, trial, ft)) = accepted else {
            return PgdResult {
                x,
                hit: None,
                converged: true,
                steps: step,
            };
        };
        if let Some((i, tb)) = first_blocking(prob, ws, &circle, 1.0, theta) {
            return PgdResult {
                x: circle.point(tb),
                hit: Some(i),
                converged: false,
                steps: step + 1,
            };
        }
        x = trial;
        fx = ft;
    }
    PgdResult {
        x,
        hit: None,
        converged: false,
        steps: max_steps,
    }
}
