//! Confidence intervals for refined change-point estimators in the
//! vanishing-jump regime.
//!
//! The refined estimator's limit is the argmin of a two-sided drifted
//! Brownian motion. The procedure estimates the jump size, drift and
//! side variances from the data, simulates the argmin of the limit process
//! on a grid, and turns empirical quantiles of the simulated argmins into an
//! interval around the refined estimate.
//!
//! The weights multiply the simulated process by the estimated *variances*
//! (not standard deviations), following the printed procedure; the symmetric
//! variant replaces the two side variances by their average.

use crate::covest::{CoefficientMatrix, PrefixStats};
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Which simulation step builds the limit process weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitMode {
    /// Asymmetric weights: each side keeps its own variance estimate.
    Step4,
    /// Symmetric weights: both sides use the averaged variance.
    Step4Prime,
}

/// Everything estimated for one change point at one level `alpha`.
#[derive(Debug, Clone, Serialize)]
pub struct InferenceResult {
    pub kappa2_hat: f64,
    pub varpi2_hat: f64,
    pub sigma2_minus: f64,
    pub sigma2_plus: f64,
    #[serde(skip)]
    pub u_samples: Vec<f64>,
    pub alpha: f64,
    pub ci_lo: i64,
    pub ci_hi: i64,
    pub mode: LimitMode,
}

/// Squared jump size: `||C_right - C_left||_F^2`.
pub fn jump_size(c_left: &CoefficientMatrix, c_right: &CoefficientMatrix) -> Result<f64> {
    if c_left.r() != c_right.r() {
        return Err(Error::DimensionMismatch(
            "coefficient matrices must share r".into(),
        ));
    }
    Ok((c_right.matrix() - c_left.matrix()).norm_squared())
}

/// Drift estimate: the average of `{Phi^T (C_right - C_left) Phi}^2` over
/// all rows in `(eta_prev, eta_next]` and all pairs, divided by the squared
/// jump size.
pub fn drift_estimate(
    stats: &PrefixStats,
    eta_prev: usize,
    eta_hat: usize,
    eta_next: usize,
    c_left: &CoefficientMatrix,
    c_right: &CoefficientMatrix,
    kappa2: f64,
) -> Result<f64> {
    if kappa2 <= 0.0 {
        return Err(Error::DegenerateJump(
            "drift estimate requires a positive squared jump size".into(),
        ));
    }
    if !(eta_prev < eta_hat && eta_hat < eta_next) {
        return Err(Error::InvalidArgument(format!(
            "need eta_prev < eta_hat < eta_next, got {eta_prev}, {eta_hat}, {eta_next}"
        )));
    }
    let diff = c_right.matrix() - c_left.matrix();
    let total = stats.quad_form(eta_prev + 1, eta_next, &diff)?;
    Ok(total / (kappa2 * (eta_next - eta_prev) as f64))
}

/// Side variance estimates: unbiased sample variances of the per-row
/// projected residual scores `Z_t` on `(eta_prev, eta_hat]` (left, using
/// `c_left`) and `Z'_t` on `(eta_hat, eta_next]` (right, using `c_right`).
pub fn variance_estimates(
    stats: &PrefixStats,
    eta_prev: usize,
    eta_hat: usize,
    eta_next: usize,
    c_left: &CoefficientMatrix,
    c_right: &CoefficientMatrix,
    kappa_hat: f64,
) -> Result<(f64, f64)> {
    if kappa_hat <= 0.0 {
        return Err(Error::DegenerateJump(
            "variance estimates require a positive jump size".into(),
        ));
    }
    if eta_hat < eta_prev + 2 || eta_next < eta_hat + 2 {
        return Err(Error::InsufficientData(format!(
            "each side needs at least 2 time points: ({eta_prev}, {eta_hat}, {eta_next})"
        )));
    }
    let diff = c_right.matrix() - c_left.matrix();
    let score = |t: usize, base: &CoefficientMatrix| -> Result<f64> {
        Ok(stats.cross_term(t, t, base, &diff)? / kappa_hat)
    };
    let sample_variance = |z: &[f64]| -> f64 {
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (z.len() - 1) as f64
    };
    let left: Vec<f64> = (eta_prev + 1..=eta_hat)
        .map(|t| score(t, c_left))
        .collect::<Result<_>>()?;
    let right: Vec<f64> = (eta_hat + 1..=eta_next)
        .map(|t| score(t, c_right))
        .collect::<Result<_>>()?;
    Ok((sample_variance(&left), sample_variance(&right)))
}

/// Draw `b_reps` argmins of the drifted two-sided random walk
/// `varpi2 |d| + sigma^2(d) W(d)` over the grid `d = i / n_grid` for
/// `i = -floor(n_grid m_range) ..= ceil(n_grid m_range)`, where `W` is a
/// scaled partial sum of independent standard Gaussians. Ties break toward
/// `d = 0`, negative side first. Replicates use independent derived RNG
/// streams, so results are reproducible regardless of parallelism.
#[allow(clippy::too_many_arguments)] // mirrors the procedure's parameter list
pub fn simulate_limit(
    varpi2: f64,
    sigma2_minus: f64,
    sigma2_plus: f64,
    b_reps: usize,
    m_range: f64,
    n_grid: usize,
    seed: u64,
    mode: LimitMode,
) -> Result<Vec<f64>> {
    if b_reps == 0 || n_grid == 0 {
        return Err(Error::InvalidArgument("B and N must be at least 1".into()));
    }
    if m_range <= 0.0 {
        return Err(Error::InvalidArgument("M must be positive".into()));
    }
    if varpi2 < 0.0 || sigma2_minus < 0.0 || sigma2_plus < 0.0 {
        return Err(Error::InvalidArgument(
            "drift and variances must be nonnegative".into(),
        ));
    }
    let (w_minus, w_plus) = match mode {
        LimitMode::Step4 => (sigma2_minus, sigma2_plus),
        LimitMode::Step4Prime => {
            let avg = 0.5 * (sigma2_minus + sigma2_plus);
            (avg, avg)
        }
    };
    let n_f = n_grid as f64;
    let i_neg = (n_f * m_range).floor() as usize;
    let i_pos = (n_f * m_range).ceil() as usize;
    let scale = 1.0 / n_f.sqrt();

    let samples: Vec<f64> = (0..b_reps)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64 + 1);
            // Partial sums toward +M first, then toward -M.
            let mut best_val = 0.0f64; // value at d = 0
            let mut best_d = 0.0f64;
            let consider = |d: f64, val: f64, best_val: &mut f64, best_d: &mut f64| {
                let better = val < *best_val
                    || (val == *best_val
                        && (d.abs() < best_d.abs() || (d.abs() == best_d.abs() && d < *best_d)));
                if better {
                    *best_val = val;
                    *best_d = d;
                }
            };
            let mut acc = 0.0;
            for i in 1..=i_pos {
                let z: f64 = StandardNormal.sample(&mut rng);
                acc += z;
                let d = i as f64 / n_f;
                consider(d, varpi2 * d + w_plus * acc * scale, &mut best_val, &mut best_d);
            }
            acc = 0.0;
            for i in 1..=i_neg {
                let z: f64 = StandardNormal.sample(&mut rng);
                acc += z;
                let d = -(i as f64) / n_f;
                consider(d, varpi2 * d.abs() + w_minus * acc * scale, &mut best_val, &mut best_d);
            }
            best_d
        })
        .collect();
    Ok(samples)
}

/// Empirical quantile at the order statistic `ceil(p B)`; when `p B` lands
/// exactly on an integer the lower variant keeps that order statistic while
/// the upper variant takes the next one, widening the interval outward.
fn quantile_lower(sorted: &[f64], p: f64) -> f64 {
    let b = sorted.len();
    let idx = ((p * b as f64).ceil() as usize).clamp(1, b);
    sorted[idx - 1]
}

fn quantile_upper(sorted: &[f64], p: f64) -> f64 {
    let b = sorted.len();
    let idx = ((p * b as f64).floor() as usize + 1).clamp(1, b);
    sorted[idx - 1]
}

/// Interval for the true change point:
/// `[floor(eta - q(1 - a/2) / kappa2), ceil(eta - q(a/2) / kappa2)]`,
/// collapsing to the point `[eta, eta]` when the jump estimate is zero.
pub fn confidence_interval(
    eta_tilde: usize,
    kappa2: f64,
    u_samples: &[f64],
    alpha: f64,
) -> Result<(i64, i64)> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    if u_samples.is_empty() {
        return Err(Error::InvalidArgument("no argmin samples".into()));
    }
    if kappa2 == 0.0 {
        return Ok((eta_tilde as i64, eta_tilde as i64));
    }
    let mut sorted = u_samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q_lo = quantile_lower(&sorted, alpha / 2.0);
    let q_hi = quantile_upper(&sorted, 1.0 - alpha / 2.0);
    let lo = (eta_tilde as f64 - q_hi / kappa2).floor() as i64;
    let hi = (eta_tilde as f64 - q_lo / kappa2).ceil() as i64;
    Ok((lo, hi))
}
