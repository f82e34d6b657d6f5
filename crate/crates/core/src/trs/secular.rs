use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::sym_eig_dense;

/// `s(μ) = Σ cᵢ²/(λᵢ+μ)² − r²` with `cᵢ = wᵢᵀq`.
#[derive(Clone, Debug)]
pub struct SecularFn {
    pub lambdas: DVector<f64>,
    pub weights: DVector<f64>,
    pub r: f64,
}

const POLE_TOL: f64 = 1e-14;

impl SecularFn {
    pub fn new(lambdas: DVector<f64>, weights: DVector<f64>, r: f64) -> Self {
        SecularFn { lambdas, weights, r }
    }

    pub fn from_problem(p: &DMatrix<f64>, q: &DVector<f64>, r: f64) -> Result<Self> {
        let eig = sym_eig_dense(p)?;
        let c = eig.vectors.transpose() * q;
        Ok(SecularFn {
            lambdas: eig.values,
            weights: c.map(|v| v * v),
            r,
        })
    }

    fn pole_check(&self, mu: Complex64) -> Result<()> {
        for (l, w) in self.lambdas.iter().zip(self.weights.iter()) {
            let d = Complex64::new(*l, 0.0) + mu;
            if *w != 0.0 && d.norm() <= POLE_TOL * l.abs().max(1.0) {
                return Err(Error::Pole);
            }
        }
        Ok(())
    }

    pub fn eval(&self, mu: Complex64) -> Result<Complex64> {
        self.pole_check(mu)?;
        let mut s = Complex64::new(-self.r * self.r, 0.0);
        for (l, w) in self.lambdas.iter().zip(self.weights.iter()) {
            if *w == 0.0 {
                continue;
            }
            let d = Complex64::new(*l, 0.0) + mu;
            s += *w / (d * d);
        }
        Ok(s)
    }

    pub fn eval_real(&self, mu: f64) -> Result<f64> {
        Ok(self.eval(Complex64::new(mu, 0.0))?.re)
    }

    /// `s′(a) = −2 Σ cᵢ²/(λᵢ+a)³`.
    pub fn deriv(&self, a: f64) -> Result<f64> {
        self.pole_check(Complex64::new(a, 0.0))?;
        let mut s = 0.0;
        for (l, w) in self.lambdas.iter().zip(self.weights.iter()) {
            if *w == 0.0 {
                continue;
            }
            let d = l + a;
            s -= 2.0 * w / (d * d * d);
        }
        Ok(s)
    }
}

pub fn secular_eval(f: &SecularFn, mu: Complex64) -> Result<Complex64> {
    f.eval(mu)
}

pub fn secular_deriv(f: &SecularFn, mu: f64) -> Result<f64> {
    f.deriv(mu)
}
