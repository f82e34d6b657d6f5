use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Full symmetric eigendecomposition with eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Eigenvalue with a unit-norm (possibly complex) eigenvector.
#[derive(Clone, Debug)]
pub struct EigPair {
    pub value: Complex64,
    pub vector: DVector<Complex64>,
    /// `‖A v − λ v‖₂` as measured when the pair was produced.
    pub residual: f64,
}

impl EigPair {
    pub fn is_real(&self, rel_tol: f64) -> bool {
        self.value.im.abs() <= rel_tol * self.value.norm().max(1.0)
    }

    /// Real part of the eigenvector after the phase rotation that maximizes
    /// its norm. For a real eigenvalue this recovers the real eigenvector.
    pub fn real_vector(&self) -> DVector<f64> {
        let re = self.vector.map(|c| c.re);
        let im = self.vector.map(|c| c.im);
        let a = re.norm_squared();
        let b = im.norm_squared();
        let c = re.dot(&im);
        // maximize ‖cosθ·re − sinθ·im‖²
        let theta = 0.5 * (-2.0 * c).atan2(a - b);
        re * theta.cos() - im * theta.sin()
    }
}

pub(crate) fn max_asymmetry(p: &DMatrix<f64>) -> f64 {
    let n = p.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((p[(i, j)] - p[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn check_symmetric(p: &DMatrix<f64>) -> Result<()> {
    if p.nrows() != p.ncols() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    let scale = p.amax().max(1.0);
    let asym = max_asymmetry(p);
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

pub fn sym_eig_dense(p: &DMatrix<f64>) -> Result<SymEig> {
    check_symmetric(p)?;
    let n = p.nrows();
    if n == 0 {
        return Ok(SymEig {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let sym = (p + p.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEig { values, vectors })
}

fn schur_eigenvalues(a: &DMatrix<f64>) -> Option<Vec<Complex64>> {
    let n = a.nrows();
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 200 * n.max(10))?;
    let vals = schur.complex_eigenvalues();
    if vals.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return None;
    }
    Some(vals.iter().copied().collect())
}

/// Deterministic orthogonal matrix used to re-run a stalled Schur iteration.
fn scrambler(n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |i, j| {
        let t = (i * 7 + j * 13 + 1) as f64;
        (t * 0.618_033_988_75).fract() - 0.5
    });
    g.qr().q()
}

pub(crate) fn sort_rightmost(values: &mut [Complex64]) {
    values.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
}

/// All eigenvalues of a real square matrix, sorted by descending real part
/// (positive imaginary part first within a conjugate pair).
pub fn eigenvalues_general(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension("eigenvalues of a non-square matrix".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let mut values = match schur_eigenvalues(a) {
        Some(v) => v,
        None => {
            let q = scrambler(n);
            let rotated = q.transpose() * a * &q;
            schur_eigenvalues(&rotated)
                .ok_or_else(|| Error::Eigensolver("Schur iteration did not converge".into()))?
        }
    };
    sort_rightmost(&mut values);
    Ok(values)
}

/// Eigenvector for an (already accurate) eigenvalue by shifted inverse iteration.
pub fn eigenvector_for(a: &DMatrix<f64>, lambda: Complex64) -> EigPair {
    let n = a.nrows();
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let ac = a.map(|v| Complex64::new(v, 0.0));
    let mut delta = 1e-13 * scale;
    let mut v = DVector::from_fn(n, |i, _| {
        Complex64::new(1.0 + 0.37 * ((i + 1) as f64 * 0.71).sin(), 0.0)
    });
    v /= Complex64::new(v.norm(), 0.0);
    for _attempt in 0..8 {
        let mut shifted = ac.clone();
        let sigma = lambda + Complex64::new(delta, 0.0);
        for i in 0..n {
            shifted[(i, i)] -= sigma;
        }
        let lu = shifted.lu();
        let mut ok = true;
        for _ in 0..3 {
            match lu.solve(&v) {
                Some(y) if y.iter().all(|c| c.re.is_finite() && c.im.is_finite()) => {
                    let nrm = y.norm();
                    if nrm == 0.0 {
                        ok = false;
                        break;
                    }
                    v = y / Complex64::new(nrm, 0.0);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            break;
        }
        delta *= 100.0;
    }
    let residual = (&ac * &v - &v * lambda).norm();
    EigPair {
        value: lambda,
        vector: v,
        residual,
    }
}

/// Rightmost `k` eigenpairs of a dense real matrix (a trailing conjugate
/// partner is included when the `k`-th value is complex).
pub fn rightmost_dense(a: &DMatrix<f64>, k: usize) -> Result<Vec<EigPair>> {
    let values = eigenvalues_general(a)?;
    let count = wanted_count(&values, k);
    Ok(values[..count]
        .iter()
        .map(|&lam| eigenvector_for(a, lam))
        .collect())
}

/// Number of leading values to report so that conjugate pairs are not split.
pub(crate) fn wanted_count(values: &[Complex64], k: usize) -> usize {
    let k = k.min(values.len());
    if k == 0 || k == values.len() {
        return k;
    }
    let last = values[k - 1];
    let next = values[k];
    let scale = last.norm().max(1.0);
    if last.im.abs() > 1e-12 * scale
        && (next.re - last.re).abs() <= 1e-10 * scale
        && (next.im + last.im).abs() <= 1e-10 * scale
    {
        k + 1
    } else {
        k
    }
}
