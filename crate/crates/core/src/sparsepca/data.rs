use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Compressed sparse rows of a k×n matrix.
#[derive(Clone, Debug)]
struct Csr {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Csr> {
        let mut sorted = triplets.to_vec();
        for &(i, j, v) in &sorted {
            if i >= rows || j >= cols {
                return Err(Error::Dimension(format!(
                    "entry ({i}, {j}) outside a {rows}x{cols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite entry at ({i}, {j})")));
            }
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &sorted {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            vals.push(v);
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Csr {
            rows,
            cols,
            row_ptr,
            col_idx,
            vals,
        })
    }

    fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.vals.len());
        for i in 0..self.rows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.push((i, self.col_idx[p], self.vals[p]));
            }
        }
        out
    }

    fn mul(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.rows, |i, _| {
            (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(|p| self.vals[p] * v[self.col_idx[p]])
                .sum()
        })
    }

    fn mul_t(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.cols);
        for i in 0..self.rows {
            let wi = w[i];
            if wi == 0.0 {
                continue;
            }
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.col_idx[p]] += self.vals[p] * wi;
            }
        }
        out
    }
}

/// Data matrix with samples as rows and variables as columns, optionally
/// centered and deflated, applied only through products.
///
/// The effective matrix is `D_c − Σ (D_c x_i) x_iᵀ`, where `D_c` is `D` with
/// column means removed (when centered) and `x_i` are the deflated vectors.
#[derive(Clone, Debug)]
pub struct DataMatrix {
    csr: Arc<Csr>,
    means: DVector<f64>,
    centered: bool,
    deflations: Vec<(DVector<f64>, DVector<f64>)>,
}

impl DataMatrix {
    /// Builds a `k×n` matrix from 0-based triplets; duplicates are summed.
    pub fn from_triplets(
        k: usize,
        n: usize,
        triplets: &[(usize, usize, f64)],
        centered: bool,
    ) -> Result<DataMatrix> {
        if k < 2 || n == 0 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 samples and 1 variable (got {k}x{n})"
            )));
        }
        let csr = Csr::from_triplets(k, n, triplets)?;
        let mut means = csr.mul_t(&DVector::from_element(k, 1.0));
        means /= k as f64;
        Ok(DataMatrix {
            csr: Arc::new(csr),
            means,
            centered,
            deflations: Vec::new(),
        })
    }

    pub fn from_dense(d: &DMatrix<f64>, centered: bool) -> Result<DataMatrix> {
        let mut trips = Vec::new();
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                if d[(i, j)] != 0.0 {
                    trips.push((i, j, d[(i, j)]));
                }
            }
        }
        DataMatrix::from_triplets(d.nrows(), d.ncols(), &trips, centered)
    }

    /// Variables become samples and vice versa. Deflations are discarded.
    pub fn transposed(&self) -> Result<DataMatrix> {
        let trips: Vec<_> = self.csr.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect();
        DataMatrix::from_triplets(self.csr.cols, self.csr.rows, &trips, self.centered)
    }

    /// Number of samples.
    pub fn samples(&self) -> usize {
        self.csr.rows
    }

    /// Number of variables.
    pub fn variables(&self) -> usize {
        self.csr.cols
    }

    pub fn nnz(&self) -> usize {
        self.csr.vals.len()
    }

    pub fn means(&self) -> &DVector<f64> {
        &self.means
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn deflation_count(&self) -> usize {
        self.deflations.len()
    }

    fn centered_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = self.csr.mul(v);
        if self.centered {
            let s = self.means.dot(v);
            out.add_scalar_mut(-s);
        }
        out
    }

    /// Effective `D v`.
    pub fn mul(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = self.centered_mul(v);
        for (u, x) in &self.deflations {
            out.axpy(-x.dot(v), u, 1.0);
        }
        out
    }

    /// Effective `Dᵀ w`.
    pub fn mul_t(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut out = self.csr.mul_t(w);
        if self.centered {
            out.axpy(-w.sum(), &self.means, 1.0);
        }
        for (u, x) in &self.deflations {
            out.axpy(-u.dot(w), x, 1.0);
        }
        out
    }

    /// `Σ v = Dᵀ D v / (k − 1)`.
    pub fn cov_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        self.mul_t(&self.mul(v)) / (self.samples() as f64 - 1.0)
    }

    /// Dense effective columns `D[:, cols]`.
    pub fn dense_columns(&self, cols: &[usize]) -> DMatrix<f64> {
        let k = self.samples();
        let mut pos = vec![usize::MAX; self.variables()];
        for (c, &j) in cols.iter().enumerate() {
            pos[j] = c;
        }
        let mut out = DMatrix::zeros(k, cols.len());
        for i in 0..k {
            for p in self.csr.row_ptr[i]..self.csr.row_ptr[i + 1] {
                let c = pos[self.csr.col_idx[p]];
                if c != usize::MAX {
                    out[(i, c)] += self.csr.vals[p];
                }
            }
        }
        for (c, &j) in cols.iter().enumerate() {
            let mut col = out.column_mut(c);
            if self.centered {
                col.add_scalar_mut(-self.means[j]);
            }
            for (u, x) in &self.deflations {
                col.axpy(-x[j], u, 1.0);
            }
        }
        out
    }

    /// Dense `Σ[cols, cols]`.
    pub fn cov_block(&self, cols: &[usize]) -> DMatrix<f64> {
        let dc = self.dense_columns(cols);
        let mut s = dc.transpose() * &dc / (self.samples() as f64 - 1.0);
        // exact symmetry for downstream checks
        for i in 0..s.nrows() {
            for j in 0..i {
                let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    /// Effective matrix assembled densely.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let all: Vec<usize> = (0..self.variables()).collect();
        self.dense_columns(&all)
    }

    /// Removes the direction `x` (unit norm) from the data: the result acts
    /// as `D − (D_c x) xᵀ` on top of earlier deflations, with `D_c` the
    /// undeflated centered matrix.
    pub fn deflate(&self, x: &DVector<f64>) -> Result<DataMatrix> {
        if x.len() != self.variables() {
            return Err(Error::Dimension(format!(
                "deflation vector has length {}, expected {}",
                x.len(),
                self.variables()
            )));
        }
        let nrm = x.norm();
        if (nrm - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!("deflation vector has norm {nrm}")));
        }
        let mut out = self.clone();
        out.deflations.push((self.centered_mul(x), x.clone()));
        Ok(out)
    }
}

/// `xᵀ Σ x` through one product with the data matrix.
pub fn explained_variance(d: &DataMatrix, x: &DVector<f64>) -> f64 {
    d.mul(x).norm_squared() / (d.samples() as f64 - 1.0)
}
