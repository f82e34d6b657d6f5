use nalgebra::{DMatrix, DVector};

use super::LinearOperator;
use crate::error::{Error, Result};

/// Orthogonal projector onto the nullspace of a full-row-rank matrix `A`.
///
/// Built from a thin QR factorization `Aᵀ = QR`; `Π v = v − Q Qᵀ v`.
#[derive(Clone, Debug)]
pub struct NullspaceProjector {
    n: usize,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl NullspaceProjector {
    pub fn identity(n: usize) -> Self {
        NullspaceProjector {
            n,
            q: DMatrix::zeros(n, 0),
            r: DMatrix::zeros(0, 0),
        }
    }

    pub fn new(a: &DMatrix<f64>, rank_tol: f64) -> Result<Self> {
        let (m, n) = a.shape();
        if m == 0 {
            return Ok(Self::identity(n));
        }
        if m > n {
            return Err(Error::Dimension(format!(
                "projector needs at most as many rows as columns, got {m}x{n}"
            )));
        }
        let qr = a.transpose().qr();
        let r = qr.r();
        let largest = (0..m).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        let rank = (0..m)
            .filter(|&i| r[(i, i)].abs() > rank_tol * largest.max(f64::MIN_POSITIVE))
            .count();
        if rank < m {
            return Err(Error::RankDeficient { rank, rows: m });
        }
        Ok(NullspaceProjector { n, q: qr.q(), r })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of constraint rows.
    pub fn rows(&self) -> usize {
        self.q.ncols()
    }

    /// Dimension of the nullspace.
    pub fn free_dim(&self) -> usize {
        self.n - self.q.ncols()
    }

    /// Orthonormal basis of `range(Aᵀ)`.
    pub fn range_basis(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.q.ncols() == 0 {
            return v.clone();
        }
        v - &self.q * (self.q.transpose() * v)
    }

    /// Minimum-norm solution of `A x = b`.
    pub fn min_norm_solution(&self, b: &DVector<f64>) -> DVector<f64> {
        if self.q.ncols() == 0 {
            return DVector::zeros(self.n);
        }
        let y = self
            .r
            .transpose()
            .solve_lower_triangular(b)
            .expect("triangular factor checked nonsingular");
        &self.q * y
    }

    /// Orthonormal basis `Z` (n × (n−m)) of the nullspace.
    pub fn nullspace_basis(&self) -> DMatrix<f64> {
        let m = self.q.ncols();
        if m == 0 {
            return DMatrix::identity(self.n, self.n);
        }
        let mut stacked = DMatrix::zeros(self.n, m + self.n);
        stacked.view_mut((0, 0), (self.n, m)).copy_from(&self.q);
        stacked
            .view_mut((0, m), (self.n, self.n))
            .copy_from(&DMatrix::identity(self.n, self.n));
        let full = stacked.qr().q();
        full.columns(m, self.n - m).into_owned()
    }
}

impl LinearOperator for NullspaceProjector {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.project(x)
    }
}

/// Orthogonal projector for `A` (see [`NullspaceProjector`]).
pub fn nullspace_projector(a: &DMatrix<f64>, rank_tol: f64) -> Result<NullspaceProjector> {
    NullspaceProjector::new(a, rank_tol)
}
