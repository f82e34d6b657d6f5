use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::dense::{eigenvalues_general, eigenvector_for, wanted_count, EigPair};
use super::LinearOperator;
use crate::error::{Error, Result};

fn orthogonalize(basis: &[DVector<f64>], mut w: DVector<f64>) -> Option<DVector<f64>> {
    let original = w.norm();
    if original == 0.0 {
        return None;
    }
    for _ in 0..2 {
        for v in basis {
            let c = v.dot(&w);
            w.axpy(-c, v, 1.0);
        }
    }
    let nrm = w.norm();
    if nrm <= 1e-10 * original {
        return None;
    }
    Some(w / nrm)
}

struct Lcg(u64);

impl Lcg {
    fn vector(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| {
            self.0 = self
                .0
                .wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add(1_442_695_040_888_963_407);
            ((self.0 >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }
}

fn complex_combination(basis: &DMatrix<f64>, y: &DVector<Complex64>) -> DVector<Complex64> {
    let re = basis * y.map(|c| c.re);
    let im = basis * y.map(|c| c.im);
    DVector::from_fn(re.len(), |i, _| Complex64::new(re[i], im[i]))
}

/// Rightmost `k` eigenpairs of a real operator by thick-restarted Arnoldi.
///
/// The search space keeps the wanted Ritz vectors (as a real basis) at every
/// restart and is extended from the common residual direction, which is the
/// Krylov–Schur form of implicit restarting with exact shifts. Products are
/// always real; Ritz vectors are formed in complex arithmetic.
pub fn arnoldi_rightmost<O: LinearOperator + ?Sized>(
    op: &O,
    k: usize,
    start: &DVector<f64>,
    tol: f64,
    max_restarts: usize,
) -> Result<Vec<EigPair>> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!(
            "requested {k} eigenpairs of a {n}-dimensional operator"
        )));
    }
    if start.len() != n {
        return Err(Error::Dimension("start vector length".into()));
    }
    let start_norm = start.norm();
    if start_norm == 0.0 || !start_norm.is_finite() {
        return Err(Error::InvalidInput("start vector must be nonzero".into()));
    }
    let m = n.min((4 * k).max(20));
    let mut rng = Lcg(0x9e37_79b9_7f4a_7c15);
    let mut basis: Vec<DVector<f64>> = vec![start / start_norm];
    let mut images: Vec<DVector<f64>> = Vec::new();

    for restart in 0..=max_restarts {
        while images.len() < basis.len() {
            let j = images.len();
            let w = op.apply(&basis[j]);
            if basis.len() < m {
                let next = orthogonalize(&basis, w.clone())
                    .or_else(|| orthogonalize(&basis, rng.vector(n)));
                if let Some(v) = next {
                    basis.push(v);
                }
            }
            images.push(w);
        }

        let p = basis.len();
        let v = DMatrix::from_columns(&basis);
        let av = DMatrix::from_columns(&images);
        let h = v.transpose() * &av;
        let h_norm = h.norm().max(f64::MIN_POSITIVE);
        let values = eigenvalues_general(&h)?;
        let count = wanted_count(&values, k.min(p));

        let mut pairs = Vec::with_capacity(count);
        let mut converged = count >= k;
        for &theta in &values[..count] {
            let y = eigenvector_for(&h, theta).vector;
            let x = complex_combination(&v, &y);
            let ax = complex_combination(&av, &y);
            let nrm = x.norm();
            let x = x / Complex64::new(nrm, 0.0);
            let ax = ax / Complex64::new(nrm, 0.0);
            let residual = (ax - &x * theta).norm();
            if residual > tol * theta.norm().max(h_norm * 1e-8) {
                converged = false;
            }
            pairs.push(EigPair {
                value: theta,
                vector: x,
                residual,
            });
        }
        if converged {
            return Ok(pairs);
        }
        if restart == max_restarts {
            break;
        }

        // Keep roughly half the space: the wanted pairs plus the next ones.
        let mut keep = count.max((p + count) / 2).min(p - 1);
        if keep > count && keep < p {
            let adjusted = wanted_count(&values, keep);
            keep = if adjusted < p { adjusted } else { keep - 1 };
        }
        let keep = keep.max(1);
        let mut columns: Vec<DVector<f64>> = Vec::with_capacity(keep);
        let mut i = 0;
        while i < keep {
            let theta = values[i];
            let y = eigenvector_for(&h, theta).vector;
            if theta.im.abs() > 1e-12 * theta.norm().max(1.0) {
                columns.push(y.map(|c| c.re));
                columns.push(y.map(|c| c.im));
                i += 2;
            } else {
                let pair = EigPair {
                    value: theta,
                    vector: y,
                    residual: 0.0,
                };
                columns.push(pair.real_vector());
                i += 1;
            }
        }
        let y = DMatrix::from_columns(&columns);
        let q = y.qr().q();
        let mut new_basis: Vec<DVector<f64>> = Vec::with_capacity(q.ncols() + 1);
        let mut new_images: Vec<DVector<f64>> = Vec::with_capacity(q.ncols() + 1);
        for j in 0..q.ncols() {
            let col = q.column(j);
            new_basis.push(&v * col);
            new_images.push(&av * col);
        }
        let mut best: Option<DVector<f64>> = None;
        let mut best_norm = 0.0;
        for img in &new_images {
            let mut f = img.clone();
            for _ in 0..2 {
                for b in &new_basis {
                    let c = b.dot(&f);
                    f.axpy(-c, b, 1.0);
                }
            }
            let nrm = f.norm();
            if nrm > best_norm {
                best_norm = nrm;
                best = Some(f);
            }
        }
        let next = best
            .and_then(|f| orthogonalize(&new_basis, f))
            .or_else(|| orthogonalize(&new_basis, rng.vector(n)));
        basis = new_basis;
        images = new_images;
        if let Some(f) = next {
            basis.push(f);
        }
    }
    Err(Error::NeedsDenseFallback {
        restarts: max_restarts,
    })
}
