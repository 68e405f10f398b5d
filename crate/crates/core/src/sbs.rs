//! Seeded binary segmentation baseline: a deterministic multi-scale
//! collection of overlapping intervals, plus a greedy gain-thresholded
//! recursion that splits at the best candidate as long as the split gain
//! exceeds a threshold `tau`.

use crate::covest::{fit_with_stats, FitOptions, PrefixStats};
use crate::dataset::FragmentedDataset;
use crate::error::{Error, Result};
use rayon::prelude::*;

/// The deterministic interval collection. Intervals are half-open `(a, b]`
/// in 0-based endpoints, i.e. they cover 1-based rows `a+1 ..= b`.
#[derive(Debug, Clone)]
pub struct SeededIntervals {
    /// Union of all layers, deduplicated, sorted by `(a, b)`.
    pub intervals: Vec<(usize, usize)>,
    /// Number of layers: `ceil(c_k log2 n)`.
    pub depth: usize,
}

/// Layer `k` (1-based): `2^k - 1` intervals of length about `n 2^{1-k}`,
/// evenly shifted by half their length.
pub fn seeded_layer(n: usize, k: u32) -> Vec<(usize, usize)> {
    let count = (1usize << k) - 1;
    let shift = n as f64 / (1u64 << k) as f64;
    (1..=count)
        .map(|i| {
            let start = ((i - 1) as f64 * shift).floor() as usize;
            let end = (((i - 1) as f64 * shift) + 2.0 * shift).ceil() as usize;
            (start.min(n), end.min(n))
        })
        .collect()
}

/// All layers `k = 1 ..= ceil(c_k log2 n)`, deduplicated and clipped to
/// `(0, n]`.
pub fn seeded_intervals(n: usize, c_k: f64) -> Result<SeededIntervals> {
    if n < 2 {
        return Err(Error::InvalidArgument("n must be at least 2".into()));
    }
    if c_k <= 0.0 {
        return Err(Error::InvalidArgument("c_k must be positive".into()));
    }
    let depth = (c_k * (n as f64).log2()).ceil() as usize;
    let mut intervals = Vec::new();
    for k in 1..=depth.max(1) {
        intervals.extend(seeded_layer(n, k as u32));
    }
    intervals.retain(|&(a, b)| b > a);
    intervals.sort_unstable();
    intervals.dedup();
    Ok(SeededIntervals {
        intervals,
        depth: depth.max(1),
    })
}

/// Best split of the 0-based half-open interval `(a, b]`: maximizes
/// `H(whole) - H(left) - H(right)` over split points leaving at least two
/// rows per side. Returns `(split, gain)`; ties take the smallest split.
fn best_split(
    stats: &PrefixStats,
    a: usize,
    b: usize,
    lambda: f64,
    fit: &FitOptions,
) -> Result<Option<(usize, f64)>> {
    if b - a < 4 {
        return Ok(None);
    }
    let h = |s: usize, e: usize| -> Result<f64> {
        let (c, _) = fit_with_stats(stats, s, e, lambda, fit)?;
        stats.residual_sum(s, e, &c)
    };
    let whole = h(a + 1, b)?;
    let mut best: Option<(usize, f64)> = None;
    for t in (a + 2)..=(b - 2) {
        let gain = whole - h(a + 1, t)? - h(t + 1, b)?;
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((t, gain));
        }
    }
    Ok(best)
}

/// Run seeded binary segmentation on prefix statistics. Returns the sorted
/// set of detected change points.
pub fn sbs_segment_with_stats(
    stats: &PrefixStats,
    lambda: f64,
    tau: f64,
    c_k: f64,
    fit: &FitOptions,
) -> Result<Vec<usize>> {
    if tau <= 0.0 {
        return Err(Error::InvalidArgument("tau must be positive".into()));
    }
    let n = stats.n();
    let seeds = seeded_intervals(n, c_k)?;
    let mut found: Vec<usize> = Vec::new();
    // Explicit recursion over search ranges (s, e].
    let mut stack = vec![(0usize, n)];
    while let Some((s, e)) = stack.pop() {
        // Candidate intervals fully contained in the current range.
        let candidates: Vec<(usize, usize)> = seeds
            .intervals
            .iter()
            .copied()
            .filter(|&(a, b)| a >= s && b <= e)
            .collect();
        let splits: Vec<Option<(usize, f64)>> = candidates
            .par_iter()
            .map(|&(a, b)| best_split(stats, a, b, lambda, fit).unwrap_or(None))
            .collect();
        let mut winner: Option<(usize, f64)> = None;
        for split in splits.into_iter().flatten() {
            if winner.is_none_or(|(_, g)| split.1 > g) {
                winner = Some(split);
            }
        }
        if let Some((b_star, gain)) = winner {
            if gain > tau {
                found.push(b_star);
                stack.push((s, b_star));
                stack.push((b_star, e));
            }
        }
    }
    found.sort_unstable();
    found.dedup();
    Ok(found)
}

/// Seeded binary segmentation on a dataset.
pub fn sbs_segment(
    data: &FragmentedDataset,
    r: usize,
    lambda: f64,
    tau: f64,
    c_k: f64,
    fit: &FitOptions,
) -> Result<Vec<usize>> {
    let stats = PrefixStats::from_dataset(data, r)?;
    sbs_segment_with_stats(&stats, lambda, tau, c_k, fit)
}
