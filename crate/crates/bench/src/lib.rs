//! Shared fixtures for the criterion benchmarks.

use nalgebra::{DMatrix, DVector};
use normqp::feasibility::{initial_point, FeasStatus};
use normqp::sparsepca::DataMatrix;
use normqp::{NormQP, TrsProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gauss(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn sym(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = gauss(rng, n, n);
    (&g + g.transpose()) * 0.5
}

pub fn trs_instance(n: usize, seed: u64) -> TrsProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = sym(&mut rng, n);
    let q = gauss(&mut rng, n, 1).column(0).into_owned();
    TrsProblem::sphere(p, q, 1.0)
}

/// A random fixed-norm QP with `m = 1.5n` inequalities and a feasible start.
pub fn qp_instance(n: usize, seed: u64) -> (NormQP, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = (1.5 * n as f64).round() as usize;
    loop {
        let p = sym(&mut rng, n);
        let q = gauss(&mut rng, n, 1).column(0).into_owned();
        let a = gauss(&mut rng, m, n);
        let b = gauss(&mut rng, m, 1).column(0).into_owned();
        let prob = NormQP::new(p, q, a, b, 100.0, 100.0).expect("valid problem");
        if let Ok(FeasStatus::Feasible(x0)) =
            initial_point(&prob.a, &prob.b, prob.r_min, prob.r_max).map(|f| f.status)
        {
            return (prob, x0);
        }
    }
}

/// `k × n` data with a 5-sparse planted direction.
pub fn planted_data(k: usize, n: usize, seed: u64) -> DataMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = gauss(&mut rng, k, 1);
    let mut v = DMatrix::zeros(1, n);
    for j in 0..5.min(n) {
        v[(0, j * (n / 5).max(1))] = 1.0;
    }
    let d = &u * v + gauss(&mut rng, k, n) * 0.1;
    DataMatrix::from_dense(&d, true).expect("valid data")
}
