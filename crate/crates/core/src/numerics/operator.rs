use nalgebra::{DMatrix, DVector};

/// A real square linear map applied through matrix-vector products.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows(), self.ncols());
        self.nrows()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self * x
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).apply(x)
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnOperator { dim, f }
    }
}

impl<F> LinearOperator for FnOperator<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }
}

/// Materializes an operator column by column.
pub fn assemble<O: LinearOperator + ?Sized>(op: &O) -> DMatrix<f64> {
    let n = op.dim();
    let mut out = DMatrix::zeros(n, n);
    let mut e = DVector::zeros(n);
    for j in 0..n {
        e[j] = 1.0;
        out.set_column(j, &op.apply(&e));
        e[j] = 0.0;
    }
    out
}
