//! Penalized positive-semidefinite least-squares covariance estimation over
//! integer intervals, plus the segment loss used by the segmentation
//! routines.
//!
//! For an interval `I` of time indices the estimator minimizes
//!
//! ```text
//! Q(C) = (1/(|I| floor(m/2))) sum_{t in I} sum_{(j,k)} {Y_tj Y_tk - Phi(X_tj)^T C Phi(X_tk)}^2
//!        + lambda J(Sigma_C) / (2 sqrt(|I| floor(m/2)))
//! ```
//!
//! over symmetric PSD `C`, where `J` is the roughness penalty from
//! [`crate::basis::roughness`]. The objective is quadratic in `C`, so every
//! interval's problem is assembled in O(p^2) from prefix sums of per-row
//! sufficient statistics (`p = r(r+1)/2`), which is what makes the O(n^2)
//! dynamic program affordable.
//!
//! Intervals are 1-based and inclusive (`[s, e]`), matching the time indices
//! used everywhere else.

use crate::basis::{fourier_eval_into, penalty_matrices, PenaltyMatrices};
use crate::dataset::{pair_set, FragmentedDataset};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Symmetric PSD coefficient matrix of a fitted covariance surface.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    mat: DMatrix<f64>,
}

impl CoefficientMatrix {
    /// Validates symmetry (1e-10) and positive semi-definiteness
    /// (smallest eigenvalue >= -1e-8 * (largest eigenvalue v 1)).
    pub fn try_new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch("matrix must be square".into()));
        }
        let asym = (&mat - mat.transpose()).abs().max();
        if asym > 1e-10 * mat.abs().max().max(1.0) {
            return Err(Error::InvalidArgument(
                "coefficient matrix must be symmetric".into(),
            ));
        }
        let eig = mat.clone().symmetric_eigen();
        let max_eig = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let min_eig = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        if min_eig < -1e-8 * max_eig.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "matrix is not positive semidefinite: smallest eigenvalue {min_eig}"
            )));
        }
        Ok(Self { mat })
    }

    pub(crate) fn from_psd(mat: DMatrix<f64>) -> Self {
        Self { mat }
    }

    pub fn r(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.mat
    }
}

/// Optimizer options for [`fit_with_stats`] and friends.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Stop when the projected-gradient norm falls below this.
    pub grad_tol: f64,
    /// Stop when the relative objective decrease falls below this.
    pub obj_rel_tol: f64,
    /// Record the per-iteration objective values in the report.
    pub record_trace: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            grad_tol: 1e-6,
            obj_rel_tol: 1e-8,
            record_trace: false,
        }
    }
}

/// Diagnostics from one covariance fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    /// Fewer product terms than free parameters, or a singular normal
    /// system; the fit still proceeds (the penalty regularizes).
    pub rank_deficient: bool,
    pub objective_trace: Option<Vec<f64>>,
}

// Half-vectorization of symmetric r x r matrices: entries (h, l) with
// h <= l in column order; p = r (r + 1) / 2.

pub(crate) fn svec_len(r: usize) -> usize {
    r * (r + 1) / 2
}

fn svec(c: &DMatrix<f64>) -> DVector<f64> {
    let r = c.nrows();
    let mut v = DVector::zeros(svec_len(r));
    let mut q = 0;
    for l in 0..r {
        for h in 0..=l {
            v[q] = c[(h, l)];
            q += 1;
        }
    }
    v
}

fn smat(v: &DVector<f64>, r: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(r, r);
    let mut q = 0;
    for l in 0..r {
        for h in 0..=l {
            c[(h, l)] = v[q];
            c[(l, h)] = v[q];
            q += 1;
        }
    }
    c
}

/// Convert a gradient in half-vec coordinates to the Frobenius-metric
/// matrix gradient: off-diagonal entries carry half the packed value
/// because they appear twice in the matrix.
fn smat_grad(g: &DVector<f64>, r: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(r, r);
    let mut q = 0;
    for l in 0..r {
        for h in 0..=l {
            if h == l {
                m[(h, h)] = g[q];
            } else {
                m[(h, l)] = 0.5 * g[q];
                m[(l, h)] = 0.5 * g[q];
            }
            q += 1;
        }
    }
    m
}

/// Design vector of one observation pair: `a . svec(C)` equals
/// `Phi(x1)^T C Phi(x2)` for symmetric `C`.
fn design_vector(x1: f64, x2: f64, r: usize, buf1: &mut [f64], buf2: &mut [f64]) -> DVector<f64> {
    fourier_eval_into(x1, buf1);
    fourier_eval_into(x2, buf2);
    let mut a = DVector::zeros(svec_len(r));
    let mut q = 0;
    for l in 0..r {
        for h in 0..=l {
            a[q] = if h == l {
                buf1[h] * buf2[h]
            } else {
                buf1[h] * buf2[l] + buf1[l] * buf2[h]
            };
            q += 1;
        }
    }
    a
}

/// Prefix sums of the per-row quadratic statistics for one truncation level.
/// Row `t` contributes `sum_pairs a a^T`, `sum_pairs target a` and
/// `sum_pairs target^2`; any contiguous interval's least-squares problem is
/// assembled by differencing.
#[derive(Debug, Clone)]
pub struct PrefixStats {
    r: usize,
    n: usize,
    gram: Vec<DMatrix<f64>>,
    moment: Vec<DVector<f64>>,
    sq: Vec<f64>,
    terms: Vec<usize>,
    penalty: PenaltyMatrices,
    /// Quadratic form of the roughness penalty in half-vec coordinates.
    penalty_form: DMatrix<f64>,
}

/// Assembled least-squares problem for one interval.
#[derive(Debug, Clone)]
pub struct IntervalProblem {
    pub gram: DMatrix<f64>,
    pub moment: DVector<f64>,
    pub sq: f64,
    pub terms: usize,
}

impl PrefixStats {
    /// Build statistics from explicit rows of `(x1, x2, target)` product
    /// observations. Each row plays the role of one time index.
    pub fn from_rows(rows: &[Vec<(f64, f64, f64)>], r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidArgument("r must be at least 1".into()));
        }
        if rows.is_empty() {
            return Err(Error::InvalidArgument("no rows".into()));
        }
        let p = svec_len(r);
        let n = rows.len();
        let mut gram = Vec::with_capacity(n + 1);
        let mut moment = Vec::with_capacity(n + 1);
        let mut sq = Vec::with_capacity(n + 1);
        let mut terms = Vec::with_capacity(n + 1);
        gram.push(DMatrix::zeros(p, p));
        moment.push(DVector::zeros(p));
        sq.push(0.0);
        terms.push(0usize);
        let mut buf1 = vec![0.0; r];
        let mut buf2 = vec![0.0; r];
        for row in rows {
            let mut g = gram.last().unwrap().clone();
            let mut mv = moment.last().unwrap().clone();
            let mut s = *sq.last().unwrap();
            let mut c = *terms.last().unwrap();
            for &(x1, x2, target) in row {
                let a = design_vector(x1, x2, r, &mut buf1, &mut buf2);
                g.ger(1.0, &a, &a, 1.0);
                mv.axpy(target, &a, 1.0);
                s += target * target;
                c += 1;
            }
            gram.push(g);
            moment.push(mv);
            sq.push(s);
            terms.push(c);
        }
        let penalty = penalty_matrices(r)?;
        let penalty_form = penalty_quadratic_form(&penalty);
        Ok(Self {
            r,
            n,
            gram,
            moment,
            sq,
            terms,
            penalty,
            penalty_form,
        })
    }

    /// Build statistics from a dataset: row `t` contributes the products
    /// `Y_{t,2i-1} Y_{t,2i}` over the disjoint pair set.
    pub fn from_dataset(data: &FragmentedDataset, r: usize) -> Result<Self> {
        let pairs = pair_set(data.m())?;
        let rows: Vec<Vec<(f64, f64, f64)>> = (0..data.n())
            .map(|t| {
                pairs
                    .pairs()
                    .iter()
                    .map(|&(j, k)| (data.x(t, j), data.x(t, k), data.y(t, j) * data.y(t, k)))
                    .collect()
            })
            .collect();
        Self::from_rows(&rows, r)
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn penalty(&self) -> &PenaltyMatrices {
        &self.penalty
    }

    fn check_interval(&self, s: usize, e: usize) -> Result<()> {
        if s == 0 || s > e || e > self.n {
            return Err(Error::InvalidArgument(format!(
                "invalid interval [{s}, {e}] for n = {}",
                self.n
            )));
        }
        Ok(())
    }

    /// Assemble the problem for the 1-based inclusive interval `[s, e]`.
    pub fn interval(&self, s: usize, e: usize) -> Result<IntervalProblem> {
        self.check_interval(s, e)?;
        Ok(IntervalProblem {
            gram: &self.gram[e] - &self.gram[s - 1],
            moment: &self.moment[e] - &self.moment[s - 1],
            sq: self.sq[e] - self.sq[s - 1],
            terms: self.terms[e] - self.terms[s - 1],
        })
    }

    /// Residual sum of squares of `c` over `[s, e]`, without any
    /// short-interval rule.
    pub fn residual_sum(&self, s: usize, e: usize, c: &CoefficientMatrix) -> Result<f64> {
        let prob = self.interval(s, e)?;
        let cv = svec(c.matrix());
        Ok(prob.sq - 2.0 * cv.dot(&prob.moment) + cv.dot(&(&prob.gram * &cv)))
    }

    /// Residual sum of squares of `c` for the single row `t` (1-based).
    pub fn row_residual_sum(&self, t: usize, c: &CoefficientMatrix) -> Result<f64> {
        self.residual_sum(t, t, c)
    }

    /// `sum_{t in [s,e]} sum_pairs (target - a.c_base)(a.c_dir)`.
    pub fn cross_term(
        &self,
        s: usize,
        e: usize,
        c_base: &CoefficientMatrix,
        c_dir: &DMatrix<f64>,
    ) -> Result<f64> {
        let prob = self.interval(s, e)?;
        let cb = svec(c_base.matrix());
        let cd = svec(c_dir);
        Ok((&prob.moment - &prob.gram * cb).dot(&cd))
    }

    /// `sum_{t in [s,e]} sum_pairs (a.c_dir)^2`.
    pub fn quad_form(&self, s: usize, e: usize, c_dir: &DMatrix<f64>) -> Result<f64> {
        let prob = self.interval(s, e)?;
        let cd = svec(c_dir);
        Ok(cd.dot(&(&prob.gram * &cd)))
    }
}

/// Roughness penalty as a quadratic form over half-vec coordinates:
/// `J(smat(c)) = c^T F c`.
fn penalty_quadratic_form(pen: &PenaltyMatrices) -> DMatrix<f64> {
    let r = pen.r();
    let p = svec_len(r);
    let basis_mats: Vec<DMatrix<f64>> = {
        let mut v = Vec::with_capacity(p);
        for l in 0..r {
            for h in 0..=l {
                let mut e = DMatrix::zeros(r, r);
                e[(h, l)] = 1.0;
                e[(l, h)] = 1.0;
                v.push(e);
            }
        }
        v
    };
    let bil = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
        (&pen.w * a * &pen.u * b).trace()
            + 2.0 * (&pen.v * a * &pen.v * b).trace()
            + (&pen.u * a * &pen.w * b).trace()
    };
    DMatrix::from_fn(p, p, |q1, q2| bil(&basis_mats[q1], &basis_mats[q2]))
}

/// Frobenius-nearest projection of a symmetric matrix onto the PSD cone:
/// negative eigenvalues are clipped to zero.
pub fn psd_project(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if s.nrows() != s.ncols() {
        return Err(Error::DimensionMismatch("matrix must be square".into()));
    }
    let asym = (s - s.transpose()).abs().max();
    if asym > 1e-8 * s.abs().max().max(1.0) {
        return Err(Error::InvalidArgument(
            "psd_project requires a symmetric matrix".into(),
        ));
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let clipped = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&v| v.max(0.0)),
    );
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    Ok((&rebuilt + rebuilt.transpose()) * 0.5)
}

struct Objective<'a> {
    prob: &'a IntervalProblem,
    penalty_form: &'a DMatrix<f64>,
    /// 1 / (|I| floor(m/2))
    inv_nw: f64,
    /// lambda / (2 sqrt(|I| floor(m/2)))
    pen_scale: f64,
}

impl Objective<'_> {
    fn value(&self, cv: &DVector<f64>) -> f64 {
        let gc = &self.prob.gram * cv;
        let data = self.prob.sq - 2.0 * cv.dot(&self.prob.moment) + cv.dot(&gc);
        let pen = cv.dot(&(self.penalty_form * cv));
        data * self.inv_nw + pen * self.pen_scale
    }

    /// Objective and half-vec gradient at `cv`.
    fn value_and_grad(&self, cv: &DVector<f64>) -> (f64, DVector<f64>) {
        let gc = &self.prob.gram * cv;
        let pc = self.penalty_form * cv;
        let data = self.prob.sq - 2.0 * cv.dot(&self.prob.moment) + cv.dot(&gc);
        let pen = cv.dot(&pc);
        let value = data * self.inv_nw + pen * self.pen_scale;
        let grad = (gc - &self.prob.moment) * (2.0 * self.inv_nw) + pc * (2.0 * self.pen_scale);
        (value, grad)
    }

    /// Hessian applied to a half-vec direction.
    fn hessian_apply(&self, cv: &DVector<f64>) -> DVector<f64> {
        (&self.prob.gram * cv) * (2.0 * self.inv_nw)
            + (self.penalty_form * cv) * (2.0 * self.pen_scale)
    }

    /// Largest-eigenvalue estimate of the Hessian in the Frobenius metric,
    /// via power iteration started from the identity direction.
    fn lipschitz(&self, r: usize) -> f64 {
        let mut e = DMatrix::identity(r, r) / (r as f64).sqrt();
        let mut lam = 0.0;
        for _ in 0..40 {
            let he = smat_grad(&self.hessian_apply(&svec(&e)), r);
            let norm = he.norm();
            if norm <= 1e-300 {
                return 0.0;
            }
            lam = norm;
            e = he / norm;
        }
        lam
    }
}

/// Solve the unconstrained regularized normal equations
/// `(G + (lambda sqrt(nw) / 2) F) c = moment`.
fn solve_normal_equations(
    prob: &IntervalProblem,
    penalty_form: &DMatrix<f64>,
    lambda: f64,
) -> (DVector<f64>, bool) {
    let nw = prob.terms as f64;
    let a = &prob.gram + penalty_form * (lambda * nw.sqrt() / 2.0);
    if let Some(chol) = a.clone().cholesky() {
        let c = chol.solve(&prob.moment);
        if c.iter().all(|v| v.is_finite()) {
            return (c, false);
        }
    }
    // Singular or indefinite within rounding; fall back to a pseudo-inverse.
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    match svd.solve(&prob.moment, 1e-12 * max_sv.max(1.0)) {
        Ok(c) if c.iter().all(|v| v.is_finite()) => (c, true),
        _ => (DVector::zeros(prob.moment.len()), true),
    }
}

/// Fit a covariance coefficient matrix on a pre-assembled interval problem.
///
/// Projected gradient descent with Armijo backtracking (halving), started
/// from the PSD projection of the unconstrained solution. The start point is
/// a pure function of the interval, so repeated fits of the same interval
/// are bit-identical.
pub fn fit_problem(
    prob: &IntervalProblem,
    penalty_form: &DMatrix<f64>,
    r: usize,
    lambda: f64,
    opts: &FitOptions,
) -> Result<(CoefficientMatrix, FitReport)> {
    if lambda < 0.0 {
        return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
    }
    if prob.terms == 0 {
        return Err(Error::InvalidArgument("empty interval".into()));
    }
    let nw = prob.terms as f64;
    let obj = Objective {
        prob,
        penalty_form,
        inv_nw: 1.0 / nw,
        pen_scale: lambda / (2.0 * nw.sqrt()),
    };
    let p = svec_len(r);
    let (c_unc, singular) = solve_normal_equations(prob, penalty_form, lambda);
    let rank_deficient = singular || prob.terms < p;

    let mut c_mat = psd_project(&smat(&c_unc, r))?;
    let lip = obj.lipschitz(r);
    let base_step = if lip > 0.0 { 1.0 / (1.01 * lip) } else { 1.0 };

    let mut cv = svec(&c_mat);
    let (mut value, mut grad) = obj.value_and_grad(&cv);
    let mut trace = opts.record_trace.then(|| vec![value]);
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;

    while iterations < opts.max_iter {
        iterations += 1;
        let grad_mat = smat_grad(&grad, r);
        let mut step = base_step;
        let mut cand;
        let mut cand_value;
        let mut diff_norm2;
        loop {
            cand = psd_project(&(&c_mat - &grad_mat * step))?;
            let diff = &cand - &c_mat;
            diff_norm2 = diff.norm_squared();
            cand_value = obj.value(&svec(&cand));
            if cand_value <= value - 1e-4 * diff_norm2 / step || diff_norm2 == 0.0 {
                break;
            }
            step *= 0.5;
            if step < 1e-18 * base_step {
                // No acceptable move; treat as a fixed point.
                cand = c_mat.clone();
                cand_value = value;
                diff_norm2 = 0.0;
                break;
            }
        }
        grad_norm = (diff_norm2.sqrt()) / step;
        let rel_drop = (value - cand_value).abs() / value.abs().max(1.0);
        c_mat = cand;
        cv = svec(&c_mat);
        let vg = obj.value_and_grad(&cv);
        value = vg.0;
        grad = vg.1;
        if let Some(tr) = trace.as_mut() {
            tr.push(value);
        }
        if grad_norm <= opts.grad_tol || rel_drop <= opts.obj_rel_tol {
            converged = true;
            break;
        }
    }

    let report = FitReport {
        objective: value,
        iterations,
        converged,
        grad_norm,
        rank_deficient,
        objective_trace: trace,
    };
    Ok((CoefficientMatrix::from_psd(c_mat), report))
}

/// Fit over the 1-based inclusive interval `[s, e]` using prefix statistics.
pub fn fit_with_stats(
    stats: &PrefixStats,
    s: usize,
    e: usize,
    lambda: f64,
    opts: &FitOptions,
) -> Result<(CoefficientMatrix, FitReport)> {
    let prob = stats.interval(s, e)?;
    fit_problem(&prob, &stats.penalty_form, stats.r, lambda, opts)
}

/// Fit over the 1-based inclusive interval `[s, e]` of a dataset.
pub fn fit_covariance(
    data: &FragmentedDataset,
    s: usize,
    e: usize,
    r: usize,
    lambda: f64,
    opts: &FitOptions,
) -> Result<(CoefficientMatrix, FitReport)> {
    let stats = PrefixStats::from_dataset(data, r)?;
    fit_with_stats(&stats, s, e, lambda, opts)
}

/// Fit directly on `(x1, x2, target)` product observations.
pub fn fit_products(
    points: &[(f64, f64, f64)],
    r: usize,
    lambda: f64,
    opts: &FitOptions,
) -> Result<(CoefficientMatrix, FitReport)> {
    let stats = PrefixStats::from_rows(&[points.to_vec()], r)?;
    fit_with_stats(&stats, 1, 1, lambda, opts)
}

/// Segment loss of Eq.-style form: the residual sum of squares when the
/// interval has at least `xi / m` time points, and exactly zero otherwise.
pub fn segment_loss(
    data: &FragmentedDataset,
    s: usize,
    e: usize,
    c: &CoefficientMatrix,
    xi: f64,
) -> Result<f64> {
    if s == 0 || s > e || e > data.n() {
        return Err(Error::InvalidArgument(format!(
            "invalid interval [{s}, {e}] for n = {}",
            data.n()
        )));
    }
    let r = c.r();
    if xi <= 0.0 {
        return Err(Error::InvalidArgument("xi must be positive".into()));
    }
    let len = (e - s + 1) as f64;
    if len < xi / data.m() as f64 {
        return Ok(0.0);
    }
    let pairs = pair_set(data.m())?;
    let mut buf1 = vec![0.0; r];
    let mut buf2 = vec![0.0; r];
    let mut acc = 0.0;
    for t in (s - 1)..e {
        for &(j, k) in pairs.pairs() {
            fourier_eval_into(data.x(t, j), &mut buf1);
            fourier_eval_into(data.x(t, k), &mut buf2);
            let mut model = 0.0;
            for h in 0..r {
                for l in 0..r {
                    model += buf1[h] * c.matrix()[(h, l)] * buf2[l];
                }
            }
            let resid = data.y(t, j) * data.y(t, k) - model;
            acc += resid * resid;
        }
    }
    Ok(acc)
}
