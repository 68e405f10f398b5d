//! End-to-end pipeline: (tune) -> segment -> refine -> infer, plus the
//! replicated evaluation harness that aggregates benchmark metrics.
//!
//! Everything here is deterministic given the settings and master seed:
//! replicate seeds and per-change-point simulation seeds are derived through
//! a SplitMix step, and all parallel loops collect results by index before
//! reducing.

use crate::covest::{fit_with_stats, CoefficientMatrix, FitOptions, FitReport, PrefixStats};
use crate::dataset::FragmentedDataset;
use crate::error::{Error, Result};
use crate::ffdp::{ffdp_segment_with_stats, FfdpOptions, Segmentation, ShortIntervalRule};
use crate::inference::{
    confidence_interval, drift_estimate, jump_size, simulate_limit, variance_estimates,
    InferenceResult, LimitMode,
};
use crate::metrics::{
    coverage_and_width, mean_sd, scaled_hausdorff, AlphaCoverage, RunSummary,
};
use crate::refine::refine_all;
use crate::sbs::sbs_segment_with_stats;
use crate::simulate::{generate, ScenarioSpec};
use crate::tuning::{cross_validate, CvOptions, CvSelection, Method, TuningGrid};
use rayon::prelude::*;
use serde::Serialize;

/// Monte-Carlo options for the confidence-interval construction.
#[derive(Debug, Clone, Serialize)]
pub struct InferenceSettings {
    pub alphas: Vec<f64>,
    pub b_reps: usize,
    pub m_range: f64,
    pub n_grid: usize,
    pub mode: LimitMode,
}

impl Default for InferenceSettings {
    fn default() -> Self {
        Self {
            alphas: vec![0.05],
            b_reps: 1000,
            m_range: 50.0,
            n_grid: 100,
            mode: LimitMode::Step4Prime,
        }
    }
}

/// Full pipeline configuration for one detection run.
#[derive(Debug, Clone)]
pub struct DetectSettings {
    pub method: Method,
    pub r: usize,
    /// Fixed roughness penalty; ignored when a tuning grid is given.
    pub lambda: f64,
    /// Fixed xi (dynamic program) or tau (seeded binary segmentation).
    pub xi_or_tau: f64,
    /// When present, cross-validation picks `(lambda, r, xi_or_tau)`.
    pub grid: Option<TuningGrid>,
    pub fit: FitOptions,
    pub short_rule: ShortIntervalRule,
    /// Seeded-interval constant for the SBS method.
    pub c_k: f64,
    pub refine: bool,
    /// `None` skips the inference stage entirely.
    pub inference: Option<InferenceSettings>,
    pub record_scan_curves: bool,
    /// Run the segmentation on the odd-index half of the data (with the
    /// penalty halved accordingly) and map the boundaries back to full
    /// indices, leaving localization to the refinement scan. This is the
    /// cheap-preliminary regime of the two-step design: the dynamic program
    /// costs a quarter as much and the refinement recovers the accuracy.
    pub prelim_on_half: bool,
}

impl Default for DetectSettings {
    fn default() -> Self {
        Self {
            method: Method::Ffdp,
            r: 3,
            lambda: 0.01,
            xi_or_tau: 1.0,
            grid: None,
            fit: FitOptions::default(),
            short_rule: ShortIntervalRule::default(),
            c_k: 1.0,
            refine: true,
            inference: Some(InferenceSettings::default()),
            record_scan_curves: false,
            prelim_on_half: false,
        }
    }
}

/// Inference blocks for one change point, one entry per alpha.
#[derive(Debug, Clone, Serialize)]
pub struct ChangePointReport {
    pub eta_hat: usize,
    pub eta_tilde: usize,
    pub inference: Vec<InferenceResult>,
    /// Why inference fell back to degenerate intervals, when it did.
    pub inference_note: Option<String>,
}

/// Output of one detection run.
#[derive(Debug, Clone, Serialize)]
pub struct DetectReport {
    pub method: Method,
    pub r: usize,
    pub lambda: f64,
    pub xi_or_tau: f64,
    pub cv: Option<CvSelection>,
    pub k_hat: usize,
    pub change_points: Vec<usize>,
    pub refined: Vec<usize>,
    pub total_cost: Option<f64>,
    pub change_point_reports: Vec<ChangePointReport>,
    #[serde(skip)]
    pub segment_fits: Vec<CoefficientMatrix>,
    pub fit_reports: Vec<FitReportSummary>,
    pub scan_curves: Option<Vec<Vec<f64>>>,
    pub timing_ms: f64,
}

/// Compact per-segment diagnostics for serialized output.
#[derive(Debug, Clone, Serialize)]
pub struct FitReportSummary {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub rank_deficient: bool,
}

impl From<&FitReport> for FitReportSummary {
    fn from(r: &FitReport) -> Self {
        Self {
            objective: r.objective,
            iterations: r.iterations,
            converged: r.converged,
            grad_norm: r.grad_norm,
            rank_deficient: r.rank_deficient,
        }
    }
}

/// SplitMix64 step, used to derive independent seeds.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Fit every segment induced by `change_points` on `stats`.
fn refit_segments(
    stats: &PrefixStats,
    change_points: &[usize],
    lambda: f64,
    fit_opts: &FitOptions,
) -> Result<(Vec<CoefficientMatrix>, Vec<FitReport>)> {
    let n = stats.n();
    let mut fits = Vec::with_capacity(change_points.len() + 1);
    let mut reports = Vec::with_capacity(change_points.len() + 1);
    let mut start = 1usize;
    for &cp in change_points.iter().chain(std::iter::once(&n)) {
        let (fit, report) = fit_with_stats(stats, start, cp, lambda, fit_opts)?;
        fits.push(fit);
        reports.push(report);
        start = cp + 1;
    }
    Ok((fits, reports))
}

fn segmentation_for(
    stats: &PrefixStats,
    m: usize,
    settings: &DetectSettings,
    lambda: f64,
    xi_or_tau: f64,
) -> Result<Segmentation> {
    match settings.method {
        Method::Ffdp => {
            let opts = FfdpOptions {
                fit: settings.fit.clone(),
                short_rule: settings.short_rule,
            };
            ffdp_segment_with_stats(stats, m, lambda, xi_or_tau, &opts)
        }
        Method::Sbs => {
            let change_points =
                sbs_segment_with_stats(stats, lambda, xi_or_tau, settings.c_k, &settings.fit)?;
            // Fit the induced segments so refinement and inference have the
            // same inputs as the dynamic-program path.
            let (segment_fits, segment_reports) =
                refit_segments(stats, &change_points, lambda, &settings.fit)?;
            Ok(Segmentation {
                k_hat: change_points.len(),
                change_points,
                segment_fits,
                segment_reports,
                total_cost: f64::NAN,
            })
        }
    }
}

/// Run the configured pipeline on one dataset. `seed` drives only the
/// Monte-Carlo limit simulation.
pub fn detect(
    data: &FragmentedDataset,
    settings: &DetectSettings,
    seed: u64,
) -> Result<DetectReport> {
    let started = std::time::Instant::now();
    let cv = match &settings.grid {
        Some(grid) => {
            let opts = CvOptions {
                fit: settings.fit.clone(),
                short_rule: settings.short_rule,
                c_k: settings.c_k,
            };
            Some(cross_validate(data, grid, settings.method, &opts)?)
        }
        None => None,
    };
    let (r, lambda, xi_or_tau) = match &cv {
        Some(sel) => (sel.r, sel.lambda, sel.xi_or_tau),
        None => (settings.r, settings.lambda, settings.xi_or_tau),
    };

    let stats = PrefixStats::from_dataset(data, r)?;
    let seg = if settings.prelim_on_half {
        let (half, _) = crate::tuning::split_odd_even(data);
        let half_stats = PrefixStats::from_dataset(&half, r)?;
        let scale = half.n() as f64 / data.n() as f64;
        let half_seg =
            segmentation_for(&half_stats, half.m(), settings, lambda, xi_or_tau * scale)?;
        let change_points: Vec<usize> = half_seg
            .change_points
            .iter()
            .map(|&c| (2 * c).min(data.n() - 1))
            .collect();
        let (segment_fits, segment_reports) =
            refit_segments(&stats, &change_points, lambda, &settings.fit)?;
        Segmentation {
            k_hat: change_points.len(),
            change_points,
            segment_fits,
            segment_reports,
            total_cost: f64::NAN,
        }
    } else {
        segmentation_for(&stats, data.m(), settings, lambda, xi_or_tau)?
    };

    let refined = if settings.refine && seg.k_hat > 0 {
        refine_all(
            &stats,
            &seg,
            lambda,
            &settings.fit,
            settings.record_scan_curves,
        )?
    } else {
        crate::refine::RefinedEstimates {
            eta_tilde: seg.change_points.clone(),
            scan_curves: None,
        }
    };

    let n = data.n();
    let mut cp_reports = Vec::with_capacity(seg.k_hat);
    for l in 0..seg.k_hat {
        let eta_hat = seg.change_points[l];
        let eta_tilde = refined.eta_tilde[l];
        let (inference, note) = match &settings.inference {
            None => (Vec::new(), None),
            Some(inf) => {
                let prev = if l == 0 { 0 } else { seg.change_points[l - 1] };
                let next = if l + 1 < seg.k_hat {
                    seg.change_points[l + 1]
                } else {
                    n
                };
                infer_change_point(
                    &stats,
                    prev,
                    eta_hat,
                    next,
                    eta_tilde,
                    &seg.segment_fits[l],
                    &seg.segment_fits[l + 1],
                    inf,
                    derive_seed(seed, l as u64),
                )
            }
        };
        cp_reports.push(ChangePointReport {
            eta_hat,
            eta_tilde,
            inference,
            inference_note: note,
        });
    }

    Ok(DetectReport {
        method: settings.method,
        r,
        lambda,
        xi_or_tau,
        cv,
        k_hat: seg.k_hat,
        change_points: seg.change_points.clone(),
        refined: refined.eta_tilde,
        total_cost: (settings.method == Method::Ffdp && !settings.prelim_on_half)
            .then_some(seg.total_cost),
        change_point_reports: cp_reports,
        fit_reports: seg.segment_reports.iter().map(Into::into).collect(),
        segment_fits: seg.segment_fits,
        scan_curves: refined.scan_curves,
        timing_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Steps 1-5 for one change point; every estimation failure degrades to the
/// point interval `[eta_tilde, eta_tilde]` with a note rather than aborting
/// the pipeline.
#[allow(clippy::too_many_arguments)]
fn infer_change_point(
    stats: &PrefixStats,
    prev: usize,
    eta_hat: usize,
    next: usize,
    eta_tilde: usize,
    c_left: &CoefficientMatrix,
    c_right: &CoefficientMatrix,
    inf: &InferenceSettings,
    seed: u64,
) -> (Vec<InferenceResult>, Option<String>) {
    let degenerate = |kappa2: f64, note: String| {
        let results = inf
            .alphas
            .iter()
            .map(|&alpha| InferenceResult {
                kappa2_hat: kappa2,
                varpi2_hat: f64::NAN,
                sigma2_minus: f64::NAN,
                sigma2_plus: f64::NAN,
                u_samples: Vec::new(),
                alpha,
                ci_lo: eta_tilde as i64,
                ci_hi: eta_tilde as i64,
                mode: inf.mode,
            })
            .collect();
        (results, Some(note))
    };

    let kappa2 = match jump_size(c_left, c_right) {
        Ok(k) => k,
        Err(e) => return degenerate(f64::NAN, e.to_string()),
    };
    if kappa2 == 0.0 {
        return degenerate(0.0, "zero jump size collapses the interval".into());
    }
    let varpi2 = match drift_estimate(stats, prev, eta_hat, next, c_left, c_right, kappa2) {
        Ok(v) => v,
        Err(e) => return degenerate(kappa2, e.to_string()),
    };
    let (s2m, s2p) = match variance_estimates(
        stats,
        prev,
        eta_hat,
        next,
        c_left,
        c_right,
        kappa2.sqrt(),
    ) {
        Ok(v) => v,
        Err(e) => return degenerate(kappa2, e.to_string()),
    };
    let u_samples = match simulate_limit(
        varpi2,
        s2m,
        s2p,
        inf.b_reps,
        inf.m_range,
        inf.n_grid,
        seed,
        inf.mode,
    ) {
        Ok(u) => u,
        Err(e) => return degenerate(kappa2, e.to_string()),
    };
    let results = inf
        .alphas
        .iter()
        .map(|&alpha| {
            let (ci_lo, ci_hi) = confidence_interval(eta_tilde, kappa2, &u_samples, alpha)
                .expect("alpha validated by settings");
            InferenceResult {
                kappa2_hat: kappa2,
                varpi2_hat: varpi2,
                sigma2_minus: s2m,
                sigma2_plus: s2p,
                u_samples: u_samples.clone(),
                alpha,
                ci_lo,
                ci_hi,
                mode: inf.mode,
            }
        })
        .collect();
    (results, None)
}

/// One replicate of the evaluation harness.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub k_hat: usize,
    pub change_points: Vec<usize>,
    pub refined: Vec<usize>,
    pub d_prelim: f64,
    pub d_refined: f64,
    /// Per alpha: intervals aligned with the true change points, present
    /// only when `k_hat` matches the truth.
    pub intervals: Vec<Option<Vec<(i64, i64)>>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationOutput {
    pub summary: RunSummary,
    pub replicates: Vec<ReplicateRecord>,
}

/// Run `reps` seeded replicates of scenario generation plus detection and
/// aggregate the benchmark metrics. `threads = 0` uses all cores.
pub fn evaluate(
    template: &ScenarioSpec,
    detect_settings: &DetectSettings,
    reps: usize,
    master_seed: u64,
    threads: usize,
) -> Result<EvaluationOutput> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;

    let alphas: Vec<f64> = detect_settings
        .inference
        .as_ref()
        .map(|i| i.alphas.clone())
        .unwrap_or_default();
    let truth_cps = template.change_points.clone();

    let results: Vec<Result<ReplicateRecord>> = pool.install(|| {
        (0..reps)
            .into_par_iter()
            .map(|i| {
                let seed = derive_seed(master_seed, i as u64);
                let spec = ScenarioSpec {
                    seed,
                    ..template.clone()
                };
                let (data, truth) = generate(&spec)?;
                let report = detect(&data, detect_settings, derive_seed(seed, 0xD37EC7))?;
                let d_prelim =
                    scaled_hausdorff(&report.change_points, &truth.change_points, data.n());
                let d_refined =
                    scaled_hausdorff(&report.refined, &truth.change_points, data.n());
                let exact = report.k_hat == truth.change_points.len();
                let intervals = alphas
                    .iter()
                    .map(|&alpha| {
                        exact.then(|| {
                            report
                                .change_point_reports
                                .iter()
                                .map(|cp| {
                                    cp.inference
                                        .iter()
                                        .find(|r| r.alpha == alpha)
                                        .map(|r| (r.ci_lo, r.ci_hi))
                                        .unwrap_or((cp.eta_tilde as i64, cp.eta_tilde as i64))
                                })
                                .collect()
                        })
                    })
                    .collect();
                Ok(ReplicateRecord {
                    replicate: i,
                    seed,
                    k_hat: report.k_hat,
                    change_points: report.change_points,
                    refined: report.refined,
                    d_prelim,
                    d_refined,
                    intervals,
                })
            })
            .collect()
    });

    let mut records = Vec::with_capacity(reps);
    for r in results {
        records.push(r?);
    }

    let k_true = truth_cps.len();
    let abs_err: Vec<f64> = records
        .iter()
        .map(|r| (r.k_hat as f64 - k_true as f64).abs())
        .collect();
    let (abs_k_err_mean, abs_k_err_sd) = mean_sd(&abs_err);
    let count = |p: &dyn Fn(&ReplicateRecord) -> bool| {
        records.iter().filter(|r| p(r)).count() as f64 / reps as f64
    };
    let d_prelim: Vec<f64> = records.iter().map(|r| r.d_prelim).collect();
    let d_refined: Vec<f64> = records.iter().map(|r| r.d_refined).collect();
    let (hausdorff_mean, hausdorff_sd) = mean_sd(&d_prelim);
    let (refined_hausdorff_mean, refined_hausdorff_sd) = mean_sd(&d_refined);

    let coverage = alphas
        .iter()
        .enumerate()
        .map(|(ai, &alpha)| {
            let per_rep: Vec<Option<Vec<(i64, i64)>>> =
                records.iter().map(|r| r.intervals[ai].clone()).collect();
            match coverage_and_width(&per_rep, &truth_cps) {
                Some((cov, w)) => AlphaCoverage {
                    alpha,
                    coverage: Some(cov),
                    width_median: Some(w.median),
                    width_sd: Some(w.sd),
                },
                None => AlphaCoverage {
                    alpha,
                    coverage: None,
                    width_median: None,
                    width_sd: None,
                },
            }
        })
        .collect();

    let summary = RunSummary {
        reps,
        abs_k_err_mean,
        abs_k_err_sd,
        prop_under: count(&|r| r.k_hat < k_true),
        prop_exact: count(&|r| r.k_hat == k_true),
        prop_over: count(&|r| r.k_hat > k_true),
        hausdorff_mean,
        hausdorff_sd,
        refined_hausdorff_mean,
        refined_hausdorff_sd,
        coverage,
    };
    Ok(EvaluationOutput {
        summary,
        replicates: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{builtin_scenario, ScenarioId};

    fn fast_settings() -> DetectSettings {
        DetectSettings {
            r: 3,
            lambda: 0.01,
            xi_or_tau: 800.0,
            inference: Some(InferenceSettings {
                b_reps: 200,
                ..InferenceSettings::default()
            }),
            ..DetectSettings::default()
        }
    }

    #[test]
    fn detect_finds_builtin_change() {
        let spec = builtin_scenario(ScenarioId::I, 60, Some(30), 12).unwrap();
        let (data, truth) = generate(&spec).unwrap();
        let report = detect(&data, &fast_settings(), 5).unwrap();
        assert_eq!(report.k_hat, 1, "{:?}", report.change_points);
        let cp = report.change_points[0] as i64;
        assert!((cp - truth.change_points[0] as i64).abs() <= 8, "cp {cp}");
        assert_eq!(report.change_point_reports.len(), 1);
        let inf = &report.change_point_reports[0].inference;
        assert_eq!(inf.len(), 1);
        assert!(inf[0].ci_lo <= inf[0].ci_hi);
        assert!(inf[0].kappa2_hat > 0.0);
    }

    #[test]
    fn evaluate_is_thread_count_invariant() {
        let spec = builtin_scenario(ScenarioId::I, 40, Some(10), 3).unwrap();
        let settings = DetectSettings {
            xi_or_tau: 400.0,
            ..fast_settings()
        };
        let a = evaluate(&spec, &settings, 3, 42, 1).unwrap();
        let b = evaluate(&spec, &settings, 3, 42, 4).unwrap();
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn evaluate_aggregates_consistently() {
        let spec = builtin_scenario(ScenarioId::I, 40, Some(10), 9).unwrap();
        let settings = DetectSettings {
            xi_or_tau: 400.0,
            ..fast_settings()
        };
        let out = evaluate(&spec, &settings, 4, 7, 2).unwrap();
        let s = &out.summary;
        assert_eq!(s.reps, 4);
        let total = s.prop_under + s.prop_exact + s.prop_over;
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(out.replicates.len(), 4);
        for r in &out.replicates {
            assert!((0.0..=1.0).contains(&r.d_prelim));
            assert!((0.0..=1.0).contains(&r.d_refined));
        }
    }
}
