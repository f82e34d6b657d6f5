use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix rows are linearly dependent (rank {rank} < {rows})")]
    RankDeficient { rank: usize, rows: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("secular function evaluated at a pole")]
    Pole,
    #[error("arnoldi did not converge after {restarts} restarts; dense fallback required")]
    NeedsDenseFallback { restarts: usize },
    #[error("eigensolver failed: {0}")]
    Eigensolver(String),
    #[error("inconsistent system (residual {residual:e})")]
    Inconsistent { residual: f64 },
    #[error("sphere of radius {radius} does not meet the affine set (min-norm point has norm {norm})")]
    SphereIncompatible { radius: f64, norm: f64 },
    #[error("infeasible starting point: {0}")]
    InfeasibleStart(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("internal inconsistency: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
