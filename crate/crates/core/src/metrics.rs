//! Evaluation metrics: Hausdorff distances between change-point sets,
//! counts of over/under/exact recovery of the number of changes, and
//! coverage and width of confidence intervals.

use crate::error::{Error, Result};
use serde::Serialize;

/// Hausdorff distance `max{max_a min_b |a-b|, max_b min_a |a-b|}` between
/// two nonempty finite point sets.
pub fn hausdorff(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument(
            "hausdorff requires nonempty sets".into(),
        ));
    }
    let one_sided = |from: &[f64], to: &[f64]| {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| (p - q).abs())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    Ok(one_sided(a, b).max(one_sided(b, a)))
}

/// Hausdorff distance between estimated and true change points divided by
/// `n`. Empty-set convention: both empty gives 0, exactly one empty gives
/// the maximal error 1.
pub fn scaled_hausdorff(est: &[usize], truth: &[usize], n: usize) -> f64 {
    match (est.is_empty(), truth.is_empty()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        (false, false) => {
            let a: Vec<f64> = est.iter().map(|&v| v as f64).collect();
            let b: Vec<f64> = truth.iter().map(|&v| v as f64).collect();
            hausdorff(&a, &b).expect("nonempty") / n as f64
        }
    }
}

/// Median and standard deviation of interval widths.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WidthStats {
    pub median: f64,
    pub sd: f64,
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var =
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64;
    (mean, var.sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

/// Coverage rate and width statistics over replicates.
///
/// Each replicate either recovered the right number of change points
/// (`Some` of one interval per true change point, aligned with `truths`) or
/// did not (`None`). Coverage counts, among qualifying replicates only, the
/// fraction of (replicate, change point) pairs whose interval contains the
/// truth. Returns `None` when no replicate qualifies.
pub fn coverage_and_width(
    replicates: &[Option<Vec<(i64, i64)>>],
    truths: &[usize],
) -> Option<(f64, WidthStats)> {
    let mut covered = 0usize;
    let mut total = 0usize;
    let mut widths = Vec::new();
    for rep in replicates.iter().flatten() {
        assert_eq!(rep.len(), truths.len(), "intervals misaligned with truths");
        for (&(lo, hi), &eta) in rep.iter().zip(truths.iter()) {
            total += 1;
            if lo <= eta as i64 && (eta as i64) <= hi {
                covered += 1;
            }
            widths.push((hi - lo) as f64);
        }
    }
    if total == 0 {
        return None;
    }
    let (_, sd) = mean_sd(&widths);
    Some((
        covered as f64 / total as f64,
        WidthStats {
            median: median(&widths),
            sd,
        },
    ))
}

/// Aggregate of one evaluation run, mirroring the benchmark table columns.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub reps: usize,
    pub abs_k_err_mean: f64,
    pub abs_k_err_sd: f64,
    pub prop_under: f64,
    pub prop_exact: f64,
    pub prop_over: f64,
    /// Scaled Hausdorff of the preliminary estimates.
    pub hausdorff_mean: f64,
    pub hausdorff_sd: f64,
    /// Scaled Hausdorff of the refined estimates.
    pub refined_hausdorff_mean: f64,
    pub refined_hausdorff_sd: f64,
    /// Per alpha: coverage among replicates with the right number of
    /// changes; absent when no replicate qualifies.
    pub coverage: Vec<AlphaCoverage>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaCoverage {
    pub alpha: f64,
    pub coverage: Option<f64>,
    pub width_median: Option<f64>,
    pub width_sd: Option<f64>,
}
