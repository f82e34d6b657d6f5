//! ℓ1-constrained sparse PCA,
//!
//! ```text
//! maximize xᵀΣx  subject to  ‖x‖₂ ≤ 1, ‖x‖₁ ≤ γ,
//! ```
//!
//! solved as a norm-constrained QP in the split variables `w = (w₁, w₂) ≥ 0`
//! with `x = w₁ − w₂`, `1ᵀw ≤ γ`, `‖w‖₂ ≤ 1`. Variables at zero are
//! eliminated, so each inner solve only sees the current support.

mod data;
pub mod io;

pub use data::{explained_variance, DataMatrix};

use nalgebra::{DMatrix, DVector};

use crate::activeset::{ActiveSetOptions, KktStatus};
use crate::error::{Error, Result};
use crate::numerics::{arnoldi_rightmost, sym_eig_dense, FnOperator};
use crate::problem::NormQP;
use crate::qpmode;

/// Entries with `|x_i| ≤ CARD_TOL·‖x‖∞` count as zero.
pub const CARD_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Default)]
pub struct SpcaOptions {
    /// Restrict to `x ≥ 0` (the `w₂` block is dropped).
    pub nonneg: bool,
    pub solver: ActiveSetOptions,
}

#[derive(Clone, Debug)]
pub struct SpcaSolution {
    pub x: DVector<f64>,
    /// `(w₁, w₂)`, length `2n`.
    pub w: DVector<f64>,
    pub support: Vec<usize>,
    pub variance: f64,
    pub gamma: f64,
    /// Status of the last inner solve.
    pub status: KktStatus,
}

impl SpcaSolution {
    pub fn cardinality(&self) -> usize {
        self.support.len()
    }

    /// `w₁ᵀw₂`.
    pub fn overlap(&self) -> f64 {
        let n = self.x.len();
        self.w.rows(0, n).dot(&self.w.rows(n, n))
    }
}

/// Indices with `|x_i| > CARD_TOL·‖x‖∞`.
pub fn support(x: &DVector<f64>) -> Vec<usize> {
    let cut = CARD_TOL * x.amax();
    (0..x.len()).filter(|&i| x[i].abs() > cut && x[i] != 0.0).collect()
}

/// `(max(x, 0), max(−x, 0))`.
pub fn split(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    DVector::from_fn(2 * n, |i, _| if i < n { x[i].max(0.0) } else { (-x[i - n]).max(0.0) })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 1.0) || !gamma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "γ = {gamma}: the problem needs γ ≥ 1"
        )));
    }
    Ok(())
}

/// Dense split problem `min −(w₁−w₂)ᵀΣ(w₁−w₂)` over
/// `{w ≥ 0, 1ᵀw ≤ γ, ‖w‖ ≤ 1}`. Rows `0..2n` are `−w_i ≤ 0`, row `2n` is the
/// ℓ1 bound.
pub fn reformulate(sigma: &DMatrix<f64>, gamma: f64) -> Result<NormQP> {
    check_gamma(gamma)?;
    let n = sigma.nrows();
    if sigma.ncols() != n {
        return Err(Error::Dimension("covariance must be square".into()));
    }
    let mut p = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..2 * n {
        for j in 0..2 * n {
            let s = if (i < n) == (j < n) { 1.0 } else { -1.0 };
            p[(i, j)] = -2.0 * s * sigma[(i % n, j % n)];
        }
    }
    let mut a = DMatrix::zeros(2 * n + 1, 2 * n);
    let mut b = DVector::zeros(2 * n + 1);
    for i in 0..2 * n {
        a[(i, i)] = -1.0;
        a[(2 * n, i)] = 1.0;
    }
    b[2 * n] = gamma;
    NormQP::new(p, DVector::zeros(2 * n), a, b, 0.0, 1.0)
}

/// Scales `w` into `{1ᵀw ≤ γ, ‖w‖ ≤ 1}`.
fn fit(w: &DVector<f64>, gamma: f64) -> DVector<f64> {
    let s = (1.0 / w.norm()).min(gamma / w.sum()).min(1.0);
    w * s
}

enum Run {
    Done(SpcaSolution),
    TooDense,
}

/// Active-set loop over the eliminated variables. Each round solves the
/// problem restricted to the free set `F` from the current point, then
/// releases eliminated variables whose nonnegativity multiplier is negative.
fn run(
    d: &DataMatrix,
    gamma: f64,
    w0: &DVector<f64>,
    opts: &SpcaOptions,
    max_free: Option<usize>,
) -> Result<Run> {
    let n = d.variables();
    let nw = if opts.nonneg { n } else { 2 * n };
    let mut w = w0.clone();
    let mut free: Vec<usize> = (0..nw).filter(|&i| w[i] > 0.0).collect();
    if free.is_empty() {
        return Err(Error::InvalidInput("start vector is zero".into()));
    }
    let sgn = |i: usize| if i < n { 1.0 } else { -1.0 };
    for _ in 0..4 * n + 20 {
        if max_free.is_some_and(|cap| free.len() > cap) {
            return Ok(Run::TooDense);
        }
        let mut vars: Vec<usize> = free.iter().map(|&i| i % n).collect();
        vars.sort_unstable();
        vars.dedup();
        let block = d.cov_block(&vars);
        let pos = |i: usize| vars.binary_search(&(i % n)).unwrap();
        let f = free.len();
        let p = DMatrix::from_fn(f, f, |a, b| {
            let (i, j) = (free[a], free[b]);
            -2.0 * sgn(i) * sgn(j) * block[(pos(i), pos(j))]
        });
        let mut a = DMatrix::zeros(f + 1, f);
        let mut b = DVector::zeros(f + 1);
        for c in 0..f {
            a[(c, c)] = -1.0;
            a[(f, c)] = 1.0;
        }
        b[f] = gamma;
        let prob = NormQP::new(p, DVector::zeros(f), a, b, 0.0, 1.0)?;
        let start = DVector::from_fn(f, |c, _| w[free[c]]);
        let start = if start.norm() > 1.0 { &start / start.norm() } else { start };
        let sol = qpmode::solve(&prob, &start, &opts.solver)?;
        let status = sol.status;
        let kappa_l1 = sol.kappa[f];
        let cut = 1e-15 * sol.x.amax();
        for (c, &i) in free.iter().enumerate() {
            w[i] = if sol.x[c] > cut { sol.x[c] } else { 0.0 };
        }

        // a coordinate split on both sides is shrunk to one side
        let mut cleaned = false;
        if !opts.nonneg {
            for v in 0..n {
                if w[v] > 0.0 && w[v + n] > 0.0 {
                    let x = w[v] - w[v + n];
                    w[v] = x.max(0.0);
                    w[v + n] = (-x).max(0.0);
                    cleaned = true;
                }
            }
        }
        free.retain(|&i| w[i] > 0.0);
        if free.is_empty() {
            return Err(Error::Internal("sparse PCA iterate collapsed to zero".into()));
        }
        if cleaned {
            continue;
        }

        let x = DVector::from_fn(n, |v, _| if opts.nonneg { w[v] } else { w[v] - w[v + n] });
        let sx = d.cov_mul(&x);
        let grad = |i: usize| -2.0 * sgn(i) * sx[i % n];
        let tol = 1e-9 * (2.0 * sx.amax()).max(1.0);
        let mut release: Vec<(f64, usize)> = (0..nw)
            .filter(|&i| w[i] == 0.0)
            .map(|i| (grad(i) + kappa_l1, i))
            .filter(|&(k, _)| k < -tol)
            .collect();
        if release.is_empty() {
            return Ok(Run::Done(finish(d, gamma, w, status)));
        }
        release.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        release.truncate(free.len().max(1));
        free.extend(release.into_iter().map(|(_, i)| i));
        free.sort_unstable();
    }
    Ok(Run::Done(finish(d, gamma, w, KktStatus::IterationCap)))
}

fn finish(d: &DataMatrix, gamma: f64, w: DVector<f64>, status: KktStatus) -> SpcaSolution {
    let n = d.variables();
    let x = DVector::from_fn(n, |v, _| w[v] - w[v + n]);
    SpcaSolution {
        support: support(&x),
        variance: explained_variance(d, &x),
        x,
        w,
        gamma,
        status,
    }
}

fn start_from(x: &DVector<f64>, gamma: f64, nonneg: bool) -> Result<DVector<f64>> {
    let mut w = split(x);
    if nonneg {
        let n = x.len();
        w.rows_mut(n, n).fill(0.0);
    }
    if w.sum() == 0.0 {
        return Err(Error::InvalidInput("initial vector has no admissible entries".into()));
    }
    Ok(fit(&w, gamma))
}

/// Principal vector for a fixed `γ`, started from `init` (split and scaled
/// into the feasible set; negative entries are clipped with `nonneg`).
pub fn solve_component(
    d: &DataMatrix,
    gamma: f64,
    init: &DVector<f64>,
    opts: &SpcaOptions,
) -> Result<SpcaSolution> {
    check_gamma(gamma)?;
    if init.len() != d.variables() {
        return Err(Error::Dimension(format!(
            "initial vector has length {}, expected {}",
            init.len(),
            d.variables()
        )));
    }
    let w0 = start_from(init, gamma, opts.nonneg)?;
    match run(d, gamma, &w0, opts, None)? {
        Run::Done(s) => checked(s),
        Run::TooDense => unreachable!("no density cap"),
    }
}

fn checked(s: SpcaSolution) -> Result<SpcaSolution> {
    let ov = s.overlap();
    if ov > 1e-8 {
        return Err(Error::Internal(format!("split halves overlap: w₁ᵀw₂ = {ov:e}")));
    }
    Ok(s)
}

fn fix_sign(x: &mut DVector<f64>) {
    let big = x.iamax();
    if x[big] < 0.0 {
        x.neg_mut();
    }
}

/// Leading eigenvector of `Σ[support, support]`, embedded in `ℝⁿ`, with the
/// largest-magnitude entry positive.
pub fn polish(d: &DataMatrix, support: &[usize]) -> Result<DVector<f64>> {
    if support.is_empty() {
        return Err(Error::InvalidInput("empty support".into()));
    }
    let mut s = support.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.last().is_some_and(|&j| j >= d.variables()) {
        return Err(Error::InvalidInput("support index out of range".into()));
    }
    let eig = sym_eig_dense(&d.cov_block(&s))?;
    let lead = eig.vectors.column(s.len() - 1);
    let mut x = DVector::zeros(d.variables());
    for (c, &j) in s.iter().enumerate() {
        x[j] = lead[c];
    }
    x /= x.norm();
    fix_sign(&mut x);
    Ok(x)
}

/// Unit leading eigenvector of `Σ`.
pub fn leading_eigenvector(d: &DataMatrix) -> Result<DVector<f64>> {
    let n = d.variables();
    let mut x = if n <= 600 {
        let all: Vec<usize> = (0..n).collect();
        let eig = sym_eig_dense(&d.cov_block(&all))?;
        eig.vectors.column(n - 1).into_owned()
    } else {
        let op = FnOperator::new(n, |v: &DVector<f64>| d.cov_mul(v));
        let start = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 13) as f64 / 13.0);
        let pairs = arnoldi_rightmost(&op, 1, &start, 1e-10, 300)?;
        pairs[0].real_vector()
    };
    x /= x.norm();
    fix_sign(&mut x);
    Ok(x)
}

/// The `count` most positive or the `count` most negative entries of `v`
/// (whichever captures more variance), sign-flipped to be nonnegative and
/// normalized.
pub fn truncated_start(d: &DataMatrix, v: &DVector<f64>, count: usize) -> DVector<f64> {
    let pick = |sign: f64| {
        let mut idx: Vec<usize> = (0..v.len()).filter(|&i| sign * v[i] > 0.0).collect();
        idx.sort_by(|&i, &j| (sign * v[j]).total_cmp(&(sign * v[i])).then(i.cmp(&j)));
        idx.truncate(count);
        let mut x = DVector::zeros(v.len());
        for i in idx {
            x[i] = sign * v[i];
        }
        let nrm = x.norm();
        if nrm > 0.0 {
            x /= nrm;
        }
        x
    };
    let pos = pick(1.0);
    let neg = pick(-1.0);
    if explained_variance(d, &neg) > explained_variance(d, &pos) {
        neg
    } else {
        pos
    }
}

#[derive(Clone, Debug)]
pub struct GammaStep {
    pub gamma: f64,
    /// `None` when the solve was abandoned for exceeding the density cap.
    pub cardinality: Option<usize>,
    pub l1: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct GammaSearch {
    pub solution: SpcaSolution,
    /// The returned cardinality equals the target.
    pub attained: bool,
    pub steps: Vec<GammaStep>,
}

pub const GAMMA_STEPS: usize = 40;

/// Bisection on `γ ∈ [1, √n]` for a solution with `target` nonzeros, each
/// solve warm-started from the last solution. Solves whose free set grows
/// past `4·target + 10` are abandoned and count as too dense.
pub fn gamma_search(d: &DataMatrix, target: usize, opts: &SpcaOptions) -> Result<GammaSearch> {
    let n = d.variables();
    if target == 0 || target > n {
        return Err(Error::InvalidInput(format!(
            "target cardinality {target} outside 1..={n}"
        )));
    }
    let lead = leading_eigenvector(d)?;
    let init = truncated_start(d, &lead, target);
    let cap = Some(4 * target + 10);
    let mut warm = init;
    let mut steps = Vec::new();
    let mut best: Option<SpcaSolution> = None;
    let better = |s: &SpcaSolution, b: &SpcaSolution| {
        let ds = s.cardinality().abs_diff(target);
        let db = b.cardinality().abs_diff(target);
        ds < db || (ds == db && s.variance > b.variance)
    };

    let (mut lo, mut hi) = (1.0_f64, (n as f64).sqrt().max(1.0));
    let schedule = [hi, lo];
    for k in 0..GAMMA_STEPS {
        let gamma = if k < 2 { schedule[k] } else { 0.5 * (lo + hi) };
        let w0 = start_from(&warm, gamma, opts.nonneg)?;
        let card = match run(d, gamma, &w0, opts, cap)? {
            Run::TooDense => {
                steps.push(GammaStep {
                    gamma,
                    cardinality: None,
                    l1: None,
                });
                None
            }
            Run::Done(s) => {
                let s = checked(s)?;
                let c = s.cardinality();
                steps.push(GammaStep {
                    gamma,
                    cardinality: Some(c),
                    l1: Some(s.x.iter().map(|v| v.abs()).sum::<f64>()),
                });
                warm = s.x.clone();
                if best.as_ref().is_none_or(|b| better(&s, b)) {
                    best = Some(s);
                }
                Some(c)
            }
        };
        match card {
            Some(c) if c == target => break,
            // γ = √n already too sparse, or γ = 1 already too dense
            Some(c) if k == 0 && c < target => break,
            Some(c) if k == 1 && c > target => break,
            Some(c) if c < target => lo = gamma,
            _ => hi = gamma,
        }
        if k >= 2 && hi - lo <= 1e-12 * hi {
            break;
        }
    }
    let solution = best.ok_or_else(|| {
        Error::Internal("every γ in the search exceeded the density cap".into())
    })?;
    Ok(GammaSearch {
        attained: solution.cardinality() == target,
        solution,
        steps,
    })
}

#[derive(Clone, Debug)]
pub struct Component {
    pub x: DVector<f64>,
    /// Variance explained on the data deflated by the earlier components.
    pub variance: f64,
    pub gamma: f64,
    pub attained: bool,
}

/// `count` sparse components: γ search, support polishing, deflation.
pub fn principal_components(
    d: &DataMatrix,
    count: usize,
    target: usize,
    opts: &SpcaOptions,
) -> Result<Vec<Component>> {
    let mut cur = d.clone();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let gs = gamma_search(&cur, target, opts)?;
        let sol = gs.solution;
        let mut x = &sol.x / sol.x.norm();
        fix_sign(&mut x);
        let polished = polish(&cur, &sol.support)?;
        let admissible = !opts.nonneg || polished.iter().all(|&v| v >= 0.0);
        if admissible && explained_variance(&cur, &polished) >= explained_variance(&cur, &x) {
            x = polished;
        }
        out.push(Component {
            variance: explained_variance(&cur, &x),
            gamma: sol.gamma,
            attained: gs.attained,
            x: x.clone(),
        });
        cur = cur.deflate(&x)?;
    }
    Ok(out)
}
