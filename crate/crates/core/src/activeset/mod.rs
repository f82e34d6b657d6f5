//! Primal active-set method for `min ½xᵀPx + qᵀx  s.t.  ‖x‖ = r, Ax ≤ b`.
//!
//! Every iterate stays feasible. Each outer iteration solves the
//! equality-constrained sphere subproblem for the current working set and
//! either jumps to a feasible minimizer, walks a descending circular arc
//! until a constraint blocks, or falls back to projected gradient descent.

pub(crate) mod engine;
pub(crate) mod geometry;
pub(crate) mod multipliers;
mod pgd;
#[cfg(test)]
mod tests;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{NullspaceProjector, RANK_TOL};
use crate::problem::NormQP;
use crate::trs::TrsOptions;

pub(crate) use engine::{Ctx, NormSide, SphereExit};
pub use engine::{limiting_direction_escape, solve_fixed_norm, solve_fixed_norm_traced};
pub use geometry::ArcOutcome;
pub use multipliers::{check_multipliers, kkt_error, KktError, MultiplierCheck};
pub(crate) use multipliers::ls_multipliers;
pub use pgd::{pre_iteration_pgd, projected_gradient_descent, PgdResult};

pub use geometry::two_dim_subproblem;

/// Indices of the inequalities currently treated as equalities, together
/// with an orthonormal factorization of the stacked rows.
#[derive(Clone, Debug)]
pub struct WorkingSet {
    indices: Vec<usize>,
    abar: DMatrix<f64>,
    bbar: DVector<f64>,
    proj: NullspaceProjector,
    /// The norm constraint is held as an equality.
    pub norm_active: bool,
}

impl WorkingSet {
    pub fn empty(n: usize) -> WorkingSet {
        WorkingSet {
            indices: Vec::new(),
            abar: DMatrix::zeros(0, n),
            bbar: DVector::zeros(0),
            proj: NullspaceProjector::identity(n),
            norm_active: true,
        }
    }

    pub fn from_indices(prob: &NormQP, indices: &[usize]) -> Result<WorkingSet> {
        let mut idx = indices.to_vec();
        idx.sort_unstable();
        idx.dedup();
        if let Some(&bad) = idx.iter().find(|&&i| i >= prob.m()) {
            return Err(Error::InvalidInput(format!(
                "working-set index {bad} out of range for {} constraints",
                prob.m()
            )));
        }
        let mut ws = WorkingSet::empty(prob.n());
        ws.rebuild(prob, idx)?;
        Ok(ws)
    }

    fn rebuild(&mut self, prob: &NormQP, indices: Vec<usize>) -> Result<()> {
        let n = prob.n();
        let mut abar = DMatrix::zeros(indices.len(), n);
        let mut bbar = DVector::zeros(indices.len());
        for (k, &i) in indices.iter().enumerate() {
            abar.set_row(k, &prob.a.row(i));
            bbar[k] = prob.b[i];
        }
        let proj = NullspaceProjector::new(&abar, RANK_TOL)?;
        self.indices = indices;
        self.abar = abar;
        self.bbar = bbar;
        self.proj = proj;
        Ok(())
    }

    /// Adds constraint `i`; fails without modifying the set when the rows
    /// would become linearly dependent.
    pub fn add(&mut self, prob: &NormQP, i: usize) -> Result<()> {
        if self.contains(i) {
            return Ok(());
        }
        let mut idx = self.indices.clone();
        idx.push(i);
        idx.sort_unstable();
        self.rebuild(prob, idx)
    }

    pub fn remove(&mut self, prob: &NormQP, i: usize) -> Result<()> {
        let idx: Vec<usize> = self.indices.iter().copied().filter(|&j| j != i).collect();
        self.rebuild(prob, idx)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn abar(&self) -> &DMatrix<f64> {
        &self.abar
    }

    pub fn bbar(&self) -> &DVector<f64> {
        &self.bbar
    }

    pub fn projector(&self) -> &NullspaceProjector {
        &self.proj
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KktStatus {
    Optimal,
    LicqFailure,
    IterationCap,
}

impl KktStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            KktStatus::Optimal => "optimal",
            KktStatus::LicqFailure => "licq_failure",
            KktStatus::IterationCap => "iteration_cap",
        }
    }
}

/// Result of an active-set solve. `kappa` has one entry per inequality
/// (zero off the working set). `mu` is the multiplier of the norm
/// constraint in the convention `∇f + Aᵀκ + μx = 0`.
#[derive(Clone, Debug)]
pub struct KktPoint {
    pub x: DVector<f64>,
    pub kappa: DVector<f64>,
    pub mu: f64,
    pub kkt_residual: f64,
    pub status: KktStatus,
    pub objective: f64,
    pub iterations: usize,
    pub working_set: Vec<usize>,
}

/// What concluded an outer iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    /// Warm-up gradient steps activated a constraint.
    PreGradient,
    /// Jumped to a feasible minimizer of the sphere subproblem.
    Subproblem,
    /// Walked along a circle of the subproblem.
    Arc,
    /// Projected gradient descent activated a constraint.
    Gradient,
    /// Left a saddle of the subproblem along negative curvature.
    Escape,
    /// Released a constraint with a negative multiplier.
    Drop(usize),
    /// Terminated at a KKT point.
    Stationary,
    /// Switched between sphere and interior mode.
    ModeSwitch,
    /// Generic QP step with the norm constraint inactive.
    Interior,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::PreGradient => "pre_pgd",
            StepKind::Subproblem => "subproblem",
            StepKind::Arc => "arc",
            StepKind::Gradient => "pgd",
            StepKind::Escape => "escape",
            StepKind::Drop(_) => "drop",
            StepKind::Stationary => "stationary",
            StepKind::ModeSwitch => "switch",
            StepKind::Interior => "qp",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TraceEvent {
    pub iter: usize,
    pub working_set: Vec<usize>,
    /// The norm constraint is in the working set after this step.
    pub norm_active: bool,
    pub objective: f64,
    pub step: StepKind,
    pub kkt_err: f64,
    /// Multiplier of the dropped constraint for `StepKind::Drop`.
    pub dropped_multiplier: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ActiveSetOptions {
    /// Outer iteration cap; `None` means `100·(m+n)`.
    pub max_iter: Option<usize>,
    pub pre_pgd_steps: usize,
    pub pgd_tol: f64,
    pub pgd_max_steps: usize,
    /// Multipliers above `-mult_tol·max(1, ‖∇f‖∞)` count as nonnegative.
    pub mult_tol: f64,
    pub trs: TrsOptions,
}

impl Default for ActiveSetOptions {
    fn default() -> Self {
        ActiveSetOptions {
            max_iter: None,
            pre_pgd_steps: 5,
            pgd_tol: 1e-8,
            pgd_max_steps: 20_000,
            mult_tol: 1e-10,
            trs: TrsOptions::default(),
        }
    }
}

impl ActiveSetOptions {
    pub fn iteration_cap(&self, prob: &NormQP) -> usize {
        self.max_iter.unwrap_or(100 * (prob.m() + prob.n()))
    }
}
