use nalgebra::DVector;

use super::WorkingSet;
use crate::polish::{least_squares, sphere_multipliers};
use crate::problem::NormQP;

/// Components of the KKT error, with the norm constraint in squared form.
/// The norm multiplier of the squared constraint is `μ/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktError {
    pub primal: f64,
    pub dual: f64,
    pub stationarity: f64,
    pub complementarity: f64,
}

impl KktError {
    pub fn total(&self) -> f64 {
        self.primal
            .max(self.dual)
            .max(self.stationarity)
            .max(self.complementarity)
    }
}

/// KKT error of `(x, κ, μ)` for `∇f + Aᵀκ + μx = 0`. On a sphere
/// (`r_min = r_max`) the norm multiplier is free; otherwise `μ ≥ 0` belongs
/// to the outer bound and `μ < 0` to the inner bound.
pub fn kkt_error(prob: &NormQP, x: &DVector<f64>, kappa: &DVector<f64>, mu: f64) -> KktError {
    let nrm2 = x.norm_squared();
    let rmax2 = prob.r_max * prob.r_max;
    let rmin2 = prob.r_min * prob.r_min;
    let slacks = prob.slacks(x);

    let mut primal = 0.0f64.max(nrm2 - rmax2).max(rmin2 - nrm2);
    for s in slacks.iter() {
        primal = primal.max(*s);
    }

    let mut dual = kappa.iter().fold(0.0f64, |d, &k| d.max(-k));
    if !prob.is_sphere() && mu < 0.0 && prob.r_min == 0.0 {
        dual = dual.max(-0.5 * mu);
    }

    let stat = prob.gradient(x) + prob.a.transpose() * kappa + x * mu;
    let stationarity = stat.amax();

    let mut compl = 0.0f64;
    for (k, s) in kappa.iter().zip(slacks.iter()) {
        compl = compl.max(k.min(s.abs()));
    }
    if !prob.is_sphere() {
        let c = if mu >= 0.0 {
            (0.5 * mu).min((nrm2 - rmax2).abs())
        } else {
            (-0.5 * mu).min((rmin2 - nrm2).abs())
        };
        compl = compl.max(c);
    }

    KktError {
        primal,
        dual,
        stationarity,
        complementarity: compl,
    }
}

/// Least-squares multipliers at `x` for the working set, scattered to a
/// full-length `κ`. With the norm constraint inactive `μ = 0`. Returns
/// `None` when the active gradients are linearly dependent.
pub(crate) fn ls_multipliers(
    prob: &NormQP,
    x: &DVector<f64>,
    ws: &WorkingSet,
) -> Option<(DVector<f64>, f64)> {
    let (nu, mu) = if ws.norm_active {
        sphere_multipliers(&prob.p, &prob.q, ws.abar(), x)?
    } else {
        let g = prob.gradient(x);
        (least_squares(&ws.abar().transpose(), &(-g))?, 0.0)
    };
    let mut kappa = DVector::zeros(prob.m());
    for (k, &i) in ws.indices().iter().enumerate() {
        kappa[i] = nu[k];
    }
    Some((kappa, mu))
}

#[derive(Clone, Debug, PartialEq)]
pub enum MultiplierCheck {
    Optimal { kappa: DVector<f64>, mu: f64 },
    Drop { index: usize, kappa: DVector<f64>, mu: f64 },
    LicqFailure,
}

/// Multipliers at a stationary point of the working-set subproblem. Drops
/// the most negative multiplier (lowest index on ties) if it is below `-tol`.
pub fn check_multipliers(
    prob: &NormQP,
    x: &DVector<f64>,
    ws: &WorkingSet,
    tol: f64,
) -> MultiplierCheck {
    let Some((kappa, mu)) = ls_multipliers(prob, x, ws) else {
        return MultiplierCheck::LicqFailure;
    };
    match most_negative(&kappa, ws) {
        Some((index, k)) if k < -tol => MultiplierCheck::Drop { index, kappa, mu },
        _ => MultiplierCheck::Optimal { kappa, mu },
    }
}

pub(crate) fn most_negative(kappa: &DVector<f64>, ws: &WorkingSet) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &i in ws.indices() {
        if best.is_none_or(|(_, k)| kappa[i] < k - 1e-12 * k.abs().max(1.0)) {
            best = Some((i, kappa[i]));
        }
    }
    best
}
