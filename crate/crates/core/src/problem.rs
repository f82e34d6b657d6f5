use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::check_symmetric;

/// `minimize ½xᵀPx + qᵀx  s.t.  r_min ≤ ‖x‖₂ ≤ r_max,  Ax ≤ b`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormQP {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub r_min: f64,
    pub r_max: f64,
}

impl NormQP {
    pub fn new(
        p: DMatrix<f64>,
        q: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        r_min: f64,
        r_max: f64,
    ) -> Result<Self> {
        let prob = NormQP {
            p,
            q,
            a,
            b,
            r_min,
            r_max,
        };
        prob.validate()?;
        Ok(prob)
    }

    /// Sphere-constrained instance (`r_min = r_max = r`).
    pub fn sphere(
        p: DMatrix<f64>,
        q: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        r: f64,
    ) -> Result<Self> {
        Self::new(p, q, a, b, r, r)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.q.len();
        if self.p.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "P is {}x{} but q has length {n}",
                self.p.nrows(),
                self.p.ncols()
            )));
        }
        if self.a.ncols() != n || self.a.nrows() != self.b.len() {
            return Err(Error::Dimension(format!(
                "A is {}x{}, b has length {}, n = {n}",
                self.a.nrows(),
                self.a.ncols(),
                self.b.len()
            )));
        }
        let finite = self.p.iter().all(|v| v.is_finite())
            && self.q.iter().all(|v| v.is_finite())
            && self.a.iter().all(|v| v.is_finite())
            && self.b.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("non-finite problem data".into()));
        }
        check_symmetric(&self.p)?;
        if !(self.r_min >= 0.0 && self.r_max > 0.0 && self.r_min <= self.r_max)
            || !self.r_max.is_finite()
        {
            return Err(Error::InvalidInput(format!(
                "need 0 ≤ r_min ≤ r_max, r_max > 0 (got {}, {})",
                self.r_min, self.r_max
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn is_sphere(&self) -> bool {
        self.r_min == self.r_max
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.p * x + &self.q
    }

    /// `a_iᵀx − b_i` for every row.
    pub fn slacks(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x - &self.b
    }

    /// `max((Ax − b)_i, ‖x‖² − r_max², r_min² − ‖x‖², 0)`; for a sphere the
    /// norm terms reduce to `|‖x‖² − r²|`.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let nrm2 = x.norm_squared();
        let mut worst = (nrm2 - self.r_max * self.r_max).max(self.r_min * self.r_min - nrm2);
        worst = worst.max(0.0);
        for s in self.slacks(x).iter() {
            worst = worst.max(*s);
        }
        worst
    }
}
