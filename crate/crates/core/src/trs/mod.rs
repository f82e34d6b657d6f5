//! Trust-region subproblem
//!
//! ```text
//! minimize ½xᵀPx + qᵀx  s.t.  ‖x‖₂ = r (or ≤ r),  Ax = b
//! ```
//!
//! The global minimizer, and the local-nonglobal minimizer when one exists,
//! are read off the two rightmost eigenpairs of
//! `M = [[−P, qqᵀ/r²], [I, −P]]` after shifting `P` to be negative definite
//! and projecting onto the nullspace of `A`.

mod operator;
mod secular;

pub use operator::{assemble_m, build_m_operator, MOperator};
pub use secular::{secular_deriv, secular_eval, SecularFn};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{
    arnoldi_rightmost, check_symmetric, minres, rightmost_dense, spectral_upper_bound,
    sym_eig_dense, EigPair, NullspaceProjector,
};
use crate::polish::{newton_polish, sphere_multipliers, Refined};

#[derive(Clone, Debug)]
pub struct TrsProblem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub r: f64,
    pub a: Option<DMatrix<f64>>,
    pub b: Option<DVector<f64>>,
    /// `true` for the sphere `‖x‖ = r`, `false` for the ball `‖x‖ ≤ r`.
    pub boundary_only: bool,
}

impl TrsProblem {
    pub fn sphere(p: DMatrix<f64>, q: DVector<f64>, r: f64) -> Self {
        TrsProblem {
            p,
            q,
            r,
            a: None,
            b: None,
            boundary_only: true,
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a = Some(a);
        self.b = Some(b);
        self
    }

    pub fn ball(mut self) -> Self {
        self.boundary_only = false;
        self
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    fn equality_rows(&self) -> usize {
        self.a.as_ref().map_or(0, |a| a.nrows())
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.p.shape() != (n, n) {
            return Err(Error::Dimension("P does not match q".into()));
        }
        check_symmetric(&self.p)?;
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::InvalidInput(format!("radius must be positive, got {}", self.r)));
        }
        let m = self.equality_rows();
        if let Some(a) = &self.a {
            if a.ncols() != n {
                return Err(Error::Dimension("A does not match q".into()));
            }
        }
        if let Some(b) = &self.b {
            if b.len() != m {
                return Err(Error::Dimension("b does not match A".into()));
            }
        }
        if n < m + 2 {
            return Err(Error::InvalidInput(format!(
                "need n − m > 1, got n = {n}, m = {m}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrsKind {
    UniqueGlobal,
    HardCasePair,
    GlobalAndLocal,
    InteriorGlobal,
}

impl TrsKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TrsKind::UniqueGlobal => "UniqueGlobal",
            TrsKind::HardCasePair => "HardCasePair",
            TrsKind::GlobalAndLocal => "GlobalAndLocal",
            TrsKind::InteriorGlobal => "InteriorGlobal",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrsDiagnostics {
    /// Rightmost eigenvalues of `M` for the original (unshifted) `P`.
    pub eigenvalues: Vec<Complex64>,
    pub eigen_residuals: Vec<f64>,
    /// `‖z₁‖/‖z‖` of the rightmost eigenvector.
    pub hard_case_ratio: f64,
    /// `‖Π((P + μI)x + q)‖` at the first global point.
    pub stationarity_residual: f64,
    /// `s(μᵍ)` on the reduced problem, when evaluated away from a pole.
    pub secular_residual: Option<f64>,
    pub used_dense: bool,
}

#[derive(Clone, Debug)]
pub struct TrsOutcome {
    pub kind: TrsKind,
    pub global_points: Vec<DVector<f64>>,
    pub global_multiplier: f64,
    pub local_point: Option<DVector<f64>>,
    pub local_multiplier: Option<f64>,
    pub shift_used: f64,
    /// Objective offset `−α r̃²/2` introduced by the shift.
    pub objective_offset: f64,
    pub diagnostics: TrsDiagnostics,
}

#[derive(Clone, Debug)]
pub struct TrsOptions {
    pub hard_case_tol: f64,
    pub spectrum_tol: f64,
    pub simple_tol: f64,
    pub imag_tol: f64,
    pub mu_tol: f64,
    pub arnoldi_tol: f64,
    pub max_restarts: usize,
    pub rank_tol: f64,
    /// Use the dense eigensolver when `2n` is at most this.
    pub dense_threshold: usize,
    pub force_dense: bool,
    pub force_arnoldi: bool,
    /// Added on top of the Gershgorin shift.
    pub extra_shift: f64,
    pub polish: bool,
}

impl Default for TrsOptions {
    fn default() -> Self {
        TrsOptions {
            hard_case_tol: 1e-7,
            spectrum_tol: 1e-6,
            simple_tol: 1e-6,
            imag_tol: 1e-8,
            mu_tol: 1e-9,
            arnoldi_tol: 1e-10,
            max_restarts: 10,
            rank_tol: 1e-10,
            dense_threshold: 80,
            force_dense: false,
            force_arnoldi: false,
            extra_shift: 0.0,
            polish: true,
        }
    }
}

/// Shift `α` making `P − αI` negative definite, with the objective offset
/// `−α r²/2` it introduces on the sphere.
pub fn shift_negative_definite(p: &DMatrix<f64>, r: f64) -> (f64, f64) {
    let alpha = spectral_upper_bound(p);
    (alpha, -0.5 * alpha * r * r)
}

/// Change of variables `x = x₀ + x̃` removing the right-hand side of `Ax = b`.
#[derive(Clone, Debug)]
pub struct Translation {
    pub x0: DVector<f64>,
    pub r_tilde: f64,
    pub q_tilde: DVector<f64>,
}

pub fn translate_inhomogeneous(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    proj: &NullspaceProjector,
    b: Option<&DVector<f64>>,
    r: f64,
) -> Result<Translation> {
    let x0 = match b {
        Some(b) => proj.min_norm_solution(b),
        None => DVector::zeros(q.len()),
    };
    let norm = x0.norm();
    if norm > r * (1.0 + 1e-12) {
        return Err(Error::SphereIncompatible { radius: r, norm });
    }
    let r_tilde = (r * r - norm * norm).max(0.0).sqrt();
    let q_tilde = q + p * &x0;
    Ok(Translation {
        x0,
        r_tilde,
        q_tilde,
    })
}

/// `x = −sign(qᵀz₂)·r·z₁/‖z₁‖`, or `None` when `‖z₁‖ ≤ hard_case_tol·‖z‖`.
pub fn extract_minimizer(
    z: &DVector<f64>,
    q: &DVector<f64>,
    r: f64,
    proj: Option<&NullspaceProjector>,
    hard_case_tol: f64,
) -> Option<DVector<f64>> {
    let n = q.len();
    let mut z1 = z.rows(0, n).into_owned();
    let z2 = z.rows(n, n).into_owned();
    if let Some(p) = proj {
        z1 = p.project(&z1);
    }
    let n1 = z1.norm();
    if n1 <= hard_case_tol * z.norm() || n1 == 0.0 {
        return None;
    }
    let sign = if q.dot(&z2) >= 0.0 { 1.0 } else { -1.0 };
    Some(z1 * (-sign * r / n1))
}

/// The two global minimizers in the hard case: `x_min + αᵢ z₂` with
/// `‖x_min + αᵢ z₂‖ = r`, where `x_min` is the minimum-length solution of
/// `(P + μI)x = −q` on the nullspace.
pub fn hard_case_solutions(
    p: &DMatrix<f64>,
    mu: f64,
    q: &DVector<f64>,
    z2: &DVector<f64>,
    proj: &NullspaceProjector,
    r: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let kernel = DMatrix::from_columns(&[proj.project(z2)]);
    hard_case_points(p, mu, q, &kernel, proj, r)
}

fn hard_case_points(
    p: &DMatrix<f64>,
    mu: f64,
    q: &DVector<f64>,
    kernel: &DMatrix<f64>,
    proj: &NullspaceProjector,
    r: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = q.len();
    let mut shifted = p.clone();
    for i in 0..n {
        shifted[(i, i)] += mu;
    }
    let (mut x_min, residual) = minres(&shifted, &(-q), Some(proj), 1e-13);
    if residual > 1e-6 * q.norm().max(1.0) {
        return Err(Error::Inconsistent { residual });
    }
    // orthonormalize the kernel directions and strip them from x_min
    let kq = kernel.clone().qr().q();
    x_min -= &kq * (kq.transpose() * &x_min);
    let z2 = kq.column(0).into_owned();
    let disc = r * r - x_min.norm_squared();
    if disc < -1e-8 * r * r {
        return Err(Error::Internal(format!(
            "hard-case quadratic has no real root (discriminant {disc:e})"
        )));
    }
    let t = disc.max(0.0).sqrt();
    Ok((&x_min + &z2 * t, &x_min - &z2 * t))
}

struct Spectrum {
    pairs: Vec<EigPair>,
    dense: bool,
}

/// Rightmost eigenpairs of the shifted, projected `M` as vectors in `ℝ²ⁿ`.
fn rightmost_pairs(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    r: f64,
    alpha: f64,
    proj: &NullspaceProjector,
    opts: &TrsOptions,
) -> Result<Spectrum> {
    let n = q.len();
    let use_dense = opts.force_dense || (!opts.force_arnoldi && 2 * n <= opts.dense_threshold);
    if !use_dense {
        let op = build_m_operator(p, q, r, proj, alpha);
        let seed = DVector::from_fn(2 * n, |i, _| 1.0 + 0.5 * ((i + 1) as f64 * 1.3).sin());
        let mut start = DVector::zeros(2 * n);
        start
            .rows_mut(0, n)
            .copy_from(&proj.project(&seed.rows(0, n).into_owned()));
        start
            .rows_mut(n, n)
            .copy_from(&proj.project(&seed.rows(n, n).into_owned()));
        match arnoldi_rightmost(&op, 3, &start, opts.arnoldi_tol, opts.max_restarts) {
            Ok(pairs) => return Ok(Spectrum { pairs, dense: false }),
            Err(Error::NeedsDenseFallback { .. }) if !opts.force_arnoldi => {}
            Err(e) => return Err(e),
        }
    }
    let z = proj.nullspace_basis();
    let pr = z.transpose() * p * &z;
    let pr = (&pr + pr.transpose()) * 0.5;
    let qr = z.transpose() * q;
    let m = assemble_m(&pr, &qr, r, alpha);
    let reduced = rightmost_dense(&m, 3)?;
    let d = z.ncols();
    let lift = |v: &DVector<Complex64>| {
        let top = v.rows(0, d).into_owned();
        let bot = v.rows(d, d).into_owned();
        let lift_half = |h: &DVector<Complex64>| {
            let re = &z * h.map(|c| c.re);
            let im = &z * h.map(|c| c.im);
            DVector::from_fn(n, |i, _| Complex64::new(re[i], im[i]))
        };
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&lift_half(&top));
        out.rows_mut(n, n).copy_from(&lift_half(&bot));
        out
    };
    let pairs = reduced
        .into_iter()
        .map(|pair| EigPair {
            value: pair.value,
            vector: lift(&pair.vector),
            residual: pair.residual,
        })
        .collect();
    Ok(Spectrum { pairs, dense: true })
}

/// Kernel of `P + μI` on the nullspace via a dense eigendecomposition of the
/// reduced Hessian; refines `μ = −λ₁` and the kernel direction.
fn refine_hard_case(
    p: &DMatrix<f64>,
    proj: &NullspaceProjector,
    z2: &DVector<f64>,
) -> Result<(f64, DMatrix<f64>)> {
    let z = proj.nullspace_basis();
    let pr = z.transpose() * p * &z;
    let pr = (&pr + pr.transpose()) * 0.5;
    let eig = sym_eig_dense(&pr)?;
    let lam1 = eig.values[0];
    let scale = eig.values.amax().max(1.0);
    let cluster: Vec<usize> = (0..eig.values.len())
        .filter(|&i| eig.values[i] - lam1 <= 1e-9 * scale)
        .collect();
    let mu = -cluster.iter().map(|&i| eig.values[i]).sum::<f64>() / cluster.len() as f64;
    let e = DMatrix::from_columns(
        &cluster
            .iter()
            .map(|&i| eig.vectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    // lead with the component of the computed eigenvector, then the rest
    let c = e.transpose() * (z.transpose() * z2);
    let mut cols = Vec::with_capacity(cluster.len());
    if c.norm() > 1e-3 * z2.norm() {
        cols.push(&z * (&e * &c) / c.norm());
    }
    for j in 0..e.ncols() {
        cols.push(&z * e.column(j));
    }
    let basis = DMatrix::from_columns(&cols);
    let q = basis.qr().q().columns(0, cluster.len()).into_owned();
    Ok((mu, q))
}

struct Polished {
    x: DVector<f64>,
    mu: f64,
    residual: f64,
}

fn projected_stationarity(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    proj: &NullspaceProjector,
    x: &DVector<f64>,
    mu: f64,
) -> f64 {
    proj.project(&(p * x + x * mu + q)).norm()
}

fn polish_point(
    prob: &TrsProblem,
    proj: &NullspaceProjector,
    x: DVector<f64>,
    mu: f64,
    enabled: bool,
) -> Polished {
    let base = projected_stationarity(&prob.p, &prob.q, proj, &x, mu);
    if !enabled {
        return Polished {
            x,
            mu,
            residual: base,
        };
    }
    let n = prob.n();
    let a = prob.a.clone().unwrap_or_else(|| DMatrix::zeros(0, n));
    let b = prob.b.clone().unwrap_or_else(|| DVector::zeros(0));
    let nu = sphere_multipliers(&prob.p, &prob.q, &a, &x)
        .map(|(nu, _)| nu)
        .unwrap_or_else(|| DVector::zeros(a.nrows()));
    let refined = newton_polish(
        &prob.p,
        &prob.q,
        &a,
        &b,
        prob.r,
        Refined {
            x: x.clone(),
            nu,
            mu,
        },
        1e-4 * prob.r.max(1.0),
    );
    let res = projected_stationarity(&prob.p, &prob.q, proj, &refined.x, refined.mu);
    let norm_err = (refined.x.norm() - prob.r).abs();
    if res <= base && norm_err <= 1e-12 * prob.r.max(1.0) {
        Polished {
            x: refined.x,
            mu: refined.mu,
            residual: res,
        }
    } else {
        Polished {
            x,
            mu,
            residual: base,
        }
    }
}

pub fn solve_trs(prob: &TrsProblem) -> Result<TrsOutcome> {
    solve_trs_with(prob, &TrsOptions::default())
}

pub fn solve_trs_with(prob: &TrsProblem, opts: &TrsOptions) -> Result<TrsOutcome> {
    prob.validate()?;
    let n = prob.n();
    let proj = match &prob.a {
        Some(a) if a.nrows() > 0 => NullspaceProjector::new(a, opts.rank_tol)?,
        _ => NullspaceProjector::identity(n),
    };
    let tr = translate_inhomogeneous(&prob.p, &prob.q, &proj, prob.b.as_ref(), prob.r)?;
    let (alpha, _) = shift_negative_definite(&prob.p, tr.r_tilde);
    let alpha = alpha + opts.extra_shift;
    let objective_offset = -0.5 * alpha * tr.r_tilde * tr.r_tilde;

    if tr.r_tilde <= 1e-12 * prob.r {
        // the sphere touches the affine set in a single point
        return Ok(TrsOutcome {
            kind: TrsKind::UniqueGlobal,
            global_points: vec![tr.x0],
            global_multiplier: 0.0,
            local_point: None,
            local_multiplier: None,
            shift_used: alpha,
            objective_offset,
            diagnostics: TrsDiagnostics::default(),
        });
    }

    let qt = proj.project(&tr.q_tilde);
    let spectrum = rightmost_pairs(&prob.p, &qt, tr.r_tilde, alpha, &proj, opts)?;
    let pairs = spectrum.pairs;
    let mut diagnostics = TrsDiagnostics {
        eigenvalues: pairs
            .iter()
            .map(|pr| pr.value - Complex64::new(alpha, 0.0))
            .collect(),
        eigen_residuals: pairs.iter().map(|pr| pr.residual).collect(),
        used_dense: spectrum.dense,
        ..Default::default()
    };
    let first = &pairs[0];
    // The rightmost eigenvalue is real in exact arithmetic; when it is
    // defective (e.g. q = 0) rounding splits it into a pair about √ε apart.
    if !first.is_real(opts.imag_tol.max(1e-6)) {
        return Err(Error::Eigensolver(format!(
            "rightmost eigenvalue {} is not real",
            first.value
        )));
    }
    let mu_g = first.value.re - alpha;

    if !prob.boundary_only && mu_g < -opts.mu_tol {
        let (xt, residual) = minres(&prob.p, &(-&tr.q_tilde), Some(&proj), 1e-13);
        if residual > 1e-8 * tr.q_tilde.norm().max(1.0) {
            return Err(Error::Inconsistent { residual });
        }
        let x = &tr.x0 + xt;
        diagnostics.stationarity_residual = projected_stationarity(&prob.p, &prob.q, &proj, &x, 0.0);
        return Ok(TrsOutcome {
            kind: TrsKind::InteriorGlobal,
            global_points: vec![x],
            global_multiplier: 0.0,
            local_point: None,
            local_multiplier: None,
            shift_used: alpha,
            objective_offset,
            diagnostics,
        });
    }

    let z = first.real_vector();
    let z1n = proj.project(&z.rows(0, n).into_owned()).norm();
    diagnostics.hard_case_ratio = z1n / z.norm();

    let (kind, globals, mu_global) =
        match extract_minimizer(&z, &qt, tr.r_tilde, Some(&proj), opts.hard_case_tol) {
            Some(xt) => {
                let pol = polish_point(prob, &proj, &tr.x0 + xt, mu_g, opts.polish);
                diagnostics.stationarity_residual = pol.residual;
                (TrsKind::UniqueGlobal, vec![pol.x], pol.mu)
            }
            None => {
                let z2 = z.rows(n, n).into_owned();
                let (mu, kernel) = refine_hard_case(&prob.p, &proj, &z2)?;
                let (xa, xb) =
                    hard_case_points(&prob.p, mu, &tr.q_tilde, &kernel, &proj, tr.r_tilde)?;
                let pa = polish_point(prob, &proj, &tr.x0 + xa, mu, opts.polish);
                let pb = polish_point(prob, &proj, &tr.x0 + xb, mu, opts.polish);
                diagnostics.stationarity_residual = pa.residual.max(pb.residual);
                (TrsKind::HardCasePair, vec![pa.x, pb.x], pa.mu)
            }
        };

    let reduced_secular = || -> Option<f64> {
        let zb = proj.nullspace_basis();
        let pr = zb.transpose() * &prob.p * &zb;
        let pr = (&pr + pr.transpose()) * 0.5;
        let f = SecularFn::from_problem(&pr, &(zb.transpose() * &tr.q_tilde), tr.r_tilde).ok()?;
        f.eval_real(mu_global).ok()
    };
    if kind == TrsKind::UniqueGlobal && n <= 200 {
        diagnostics.secular_residual = reduced_secular();
    }

    let mut outcome = TrsOutcome {
        kind,
        global_points: globals,
        global_multiplier: mu_global,
        local_point: None,
        local_multiplier: None,
        shift_used: alpha,
        objective_offset,
        diagnostics,
    };
    if kind == TrsKind::UniqueGlobal {
        if let Some((xl, mul)) = classify_local_nonglobal(&pairs, &qt, tr.r_tilde, &proj, opts) {
            let pol = polish_point(prob, &proj, &tr.x0 + xl, mul - alpha, opts.polish);
            outcome.kind = TrsKind::GlobalAndLocal;
            outcome.local_point = Some(pol.x);
            outcome.local_multiplier = Some(pol.mu);
        }
    }
    Ok(outcome)
}

/// Local-nonglobal minimizer from the second-rightmost eigenpair, if the
/// eigenvalue is real, simple and not an eigenvalue of `−P`. Returns the
/// translated point and the (shifted) eigenvalue.
fn classify_local_nonglobal(
    pairs: &[EigPair],
    q: &DVector<f64>,
    r: f64,
    proj: &NullspaceProjector,
    opts: &TrsOptions,
) -> Option<(DVector<f64>, f64)> {
    let first = pairs.first()?;
    let second = pairs.get(1)?;
    let mu2 = second.value;
    let scale = mu2.norm().max(1.0);
    if mu2.im.abs() > opts.imag_tol * scale {
        return None;
    }
    if (first.value - mu2).norm() <= opts.simple_tol * scale {
        return None;
    }
    if let Some(third) = pairs.get(2) {
        if (third.value - mu2).norm() <= opts.simple_tol * scale {
            return None;
        }
    }
    let z = second.real_vector();
    let x = extract_minimizer(&z, q, r, Some(proj), opts.hard_case_tol)?;
    Some((x, mu2.re))
}

#[cfg(test)]
mod tests;
