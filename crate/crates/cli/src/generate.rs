//! Random benchmark instances: `P = (G + Gᵀ)/2`, `q`, `A`, `b` with standard
//! normal entries and `r_min = r_max = r`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::problem_file::ProblemFile;

#[derive(Clone, Debug)]
pub struct GenSpec {
    pub n: usize,
    pub m_factor: f64,
    pub r: f64,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        GenSpec {
            n,
            m_factor: 1.5,
            r: 100.0,
            seed,
        }
    }

    pub fn m(&self) -> usize {
        (self.m_factor * self.n as f64).round() as usize
    }
}

/// Draws `G`, `q`, `A`, `b` in that order, each row-major.
pub fn generate(spec: &GenSpec) -> ProblemFile {
    let n = spec.n;
    let m = spec.m();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let g = DMatrix::from_row_iterator(n, n, (0..n * n).map(|_| draw()));
    let p = (&g + g.transpose()) * 0.5;
    let q = DVector::from_iterator(n, (0..n).map(|_| draw()));
    let a = DMatrix::from_row_iterator(m, n, (0..m * n).map(|_| draw()));
    let b = DVector::from_iterator(m, (0..m).map(|_| draw()));
    ProblemFile {
        p,
        q,
        a,
        b,
        r_min: spec.r,
        r_max: spec.r,
        x0: None,
    }
}
