use nalgebra::{DMatrix, DVector};

use crate::numerics::{LinearOperator, NullspaceProjector};

/// Action of the projected, shifted matrix
/// `Π₂ [[−(P−αI), qqᵀ/r²], [I, −(P−αI)]] Π₂` on vectors `[z₁; z₂]`.
pub struct MOperator<'a> {
    pub p: &'a DMatrix<f64>,
    pub q: DVector<f64>,
    pub r: f64,
    pub alpha: f64,
    pub proj: &'a NullspaceProjector,
}

impl LinearOperator for MOperator<'_> {
    fn dim(&self) -> usize {
        2 * self.q.len()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.q.len();
        let z1 = self.proj.project(&v.rows(0, n).into_owned());
        let z2 = self.proj.project(&v.rows(n, n).into_owned());
        let pz1 = self.p * &z1 - &z1 * self.alpha;
        let pz2 = self.p * &z2 - &z2 * self.alpha;
        let top = &self.q * (self.q.dot(&z2) / (self.r * self.r)) - pz1;
        let bottom = z1 - pz2;
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&self.proj.project(&top));
        out.rows_mut(n, n).copy_from(&self.proj.project(&bottom));
        out
    }
}

pub fn build_m_operator<'a>(
    p: &'a DMatrix<f64>,
    q: &DVector<f64>,
    r: f64,
    proj: &'a NullspaceProjector,
    alpha: f64,
) -> MOperator<'a> {
    MOperator {
        p,
        q: q.clone(),
        r,
        alpha,
        proj,
    }
}

/// Dense `[[−(P−αI), qqᵀ/r²], [I, −(P−αI)]]`.
pub fn assemble_m(p: &DMatrix<f64>, q: &DVector<f64>, r: f64, alpha: f64) -> DMatrix<f64> {
    let n = q.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    let mut neg = -p.clone();
    for i in 0..n {
        neg[(i, i)] += alpha;
    }
    m.view_mut((0, 0), (n, n)).copy_from(&neg);
    m.view_mut((n, n), (n, n)).copy_from(&neg);
    m.view_mut((0, n), (n, n))
        .copy_from(&(q * q.transpose() / (r * r)));
    m.view_mut((n, 0), (n, n))
        .copy_from(&DMatrix::identity(n, n));
    m
}
