use nalgebra::DVector;

use super::{LinearOperator, NullspaceProjector};
use crate::error::{Error, Result};

/// Minimum-length solution of a consistent symmetric (possibly singular)
/// system `Π op Π x = Π rhs` by MINRES started from zero.
///
/// Starting from zero keeps every iterate in the Krylov space of `Π rhs`,
/// which lies in the range of the operator, so the limit carries no kernel
/// component.
pub fn min_length_solve<O: LinearOperator + ?Sized>(
    op: &O,
    rhs: &DVector<f64>,
    projector: Option<&NullspaceProjector>,
    tol: f64,
) -> Result<DVector<f64>> {
    let (x, residual) = minres(op, rhs, projector, tol);
    if residual > tol * rhs.norm() {
        return Err(Error::Inconsistent { residual });
    }
    Ok(x)
}

/// MINRES iterate and its true residual `‖Π(op(x) − rhs)‖`, without the
/// consistency check.
pub(crate) fn minres<O: LinearOperator + ?Sized>(
    op: &O,
    rhs: &DVector<f64>,
    projector: Option<&NullspaceProjector>,
    tol: f64,
) -> (DVector<f64>, f64) {
    let n = op.dim();
    let proj = |v: &DVector<f64>| match projector {
        Some(p) => p.project(v),
        None => v.clone(),
    };
    let apply = |v: &DVector<f64>| proj(&op.apply(&proj(v)));

    let b = proj(rhs);
    let beta1 = b.norm();
    let mut x = DVector::zeros(n);
    if beta1 == 0.0 {
        return (x, 0.0);
    }

    let mut r1 = b.clone();
    let mut r2 = b.clone();
    let mut y = b;
    let mut beta = beta1;
    let mut oldb = 0.0;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w = DVector::zeros(n);
    let mut w2 = DVector::zeros(n);
    let max_iter = 20 * n.max(10);

    for itn in 0..max_iter {
        let v = &y / beta;
        y = apply(&v);
        if itn > 0 {
            y -= &r1 * (beta / oldb);
        }
        let alfa = v.dot(&y);
        y -= &r2 * (alfa / beta);
        r1 = r2;
        r2 = y.clone();
        oldb = beta;
        beta = y.norm();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let w1 = w2;
        w2 = w;
        w = (&v - &w1 * oldeps - &w2 * delta) / gamma;
        x += &w * phi;

        if phibar <= 0.1 * tol * beta1 || beta <= f64::EPSILON * beta1 {
            break;
        }
    }

    let x = proj(&x);
    let residual = (apply(&x) - proj(rhs)).norm();
    (x, residual)
}
