//! Linear-algebra building blocks: operators, projectors, dense and
//! Krylov eigensolvers, and minimum-length symmetric solves.

mod arnoldi;
mod dense;
mod minres;
mod operator;
mod projector;

pub use arnoldi::arnoldi_rightmost;
pub use dense::{
    eigenvalues_general, eigenvector_for, rightmost_dense, sym_eig_dense, EigPair, SymEig,
};
#[allow(unused_imports)]
pub(crate) use dense::check_symmetric;
pub use minres::min_length_solve;
pub(crate) use minres::minres;
pub use operator::{assemble, FnOperator, LinearOperator};
pub use projector::{nullspace_projector, NullspaceProjector};

use nalgebra::DMatrix;

pub const RANK_TOL: f64 = 1e-10;
pub const ARNOLDI_TOL: f64 = 1e-10;
pub const ARNOLDI_MAX_RESTARTS: usize = 10;

/// Gershgorin bound strictly above the largest eigenvalue of `p`.
pub fn spectral_upper_bound(p: &DMatrix<f64>) -> f64 {
    let n = p.nrows();
    let mut bound = f64::NEG_INFINITY;
    let mut scale: f64 = 0.0;
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| p[(i, j)].abs()).sum();
        bound = bound.max(p[(i, i)] + off);
        scale = scale.max(p[(i, i)].abs() + off);
    }
    if n == 0 {
        bound = 0.0;
    }
    bound + 1e-2 * scale.max(1.0)
}
