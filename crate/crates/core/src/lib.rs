//! Solvers for nonconvex quadratic programs with linear inequality
//! constraints and a two-sided Euclidean norm bound,
//!
//! ```text
//! minimize ½ xᵀPx + qᵀx  subject to  r_min ≤ ‖x‖₂ ≤ r_max,  Ax ≤ b,
//! ```
//!
//! built around a trust-region-subproblem solver that reads global and
//! local-nonglobal minimizers off the rightmost eigenpairs of a 2n×2n matrix.

pub mod activeset;
pub mod error;
pub mod feasibility;
pub mod numerics;

pub use activeset::{
    solve_fixed_norm, ActiveSetOptions, KktPoint, KktStatus, StepKind, TraceEvent, WorkingSet,
};
pub use error::{Error, Result};
pub use numerics::{EigPair, LinearOperator, NullspaceProjector, SymEig};
pub mod problem;
pub mod qpmode;
pub mod sparsepca;
pub mod trs;

mod polish;

pub use problem::NormQP;
pub use trs::{solve_trs, TrsKind, TrsOptions, TrsOutcome, TrsProblem};
