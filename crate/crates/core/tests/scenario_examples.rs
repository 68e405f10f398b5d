//! Statistical behaviour on the built-in benchmark scenarios: seed-fixed
//! Monte-Carlo checks of the segmentation, the refinement operation and the
//! seeded-binary-segmentation baseline.

use fragcp_core::covest::{CoefficientMatrix, PrefixStats};
use fragcp_core::experiment::derive_seed;
use fragcp_core::ffdp::{ffdp_segment_with_stats, FfdpOptions};
use fragcp_core::refine::{local_refine, refine_intervals};
use fragcp_core::sbs::sbs_segment;
use fragcp_core::simulate::{
    builtin_scenario, generate, BasisFn, ScenarioId, ScenarioSpec, SegmentCov,
};
use nalgebra::{DMatrix, DVector};

#[test]
fn ffdp_locates_single_change_on_scenario_i() {
    // n = 200 draws of scenario (i): the dynamic program should report one
    // change within 20 of the truth on at least 15 of 20 seeds.
    let mut hits = 0;
    for rep in 0..20u64 {
        let seed = derive_seed(5, rep);
        let mut spec = builtin_scenario(ScenarioId::I, 200, Some(30), seed).unwrap();
        spec.seed = seed;
        let (data, truth) = generate(&spec).unwrap();
        let stats = PrefixStats::from_dataset(&data, 3).unwrap();
        let seg =
            ffdp_segment_with_stats(&stats, 30, 0.1, 1600.0, &FfdpOptions::default()).unwrap();
        if seg.k_hat == 1
            && (seg.change_points[0] as i64 - truth.change_points[0] as i64).abs() <= 20
        {
            hits += 1;
        }
    }
    assert!(hits >= 15, "only {hits}/20 within 20 of the truth");
}

#[test]
fn oracle_refinement_rarely_worsens() {
    // Scenario (iv) at n = 300, m = 20: perturb the true change point by
    // 12-34 and scan with the true coefficient matrices. The refined
    // estimate should be at least as close as the perturbed one in >= 90%
    // of 50 draws.
    let (n, m) = (300usize, 20usize);
    let c_pre = CoefficientMatrix::try_new(DMatrix::from_diagonal(&DVector::from_vec(vec![
        0.5, 2.0, 1.4,
    ])))
    .unwrap();
    let c_post = CoefficientMatrix::try_new(DMatrix::from_diagonal(&DVector::from_vec(vec![
        3.5, 4.0, 3.5,
    ])))
    .unwrap();
    let mut ok = 0;
    let mut total = 0;
    for rep in 0..50u64 {
        let seed = derive_seed(21, rep);
        let mut spec = builtin_scenario(ScenarioId::IV, n, Some(m), seed).unwrap();
        spec.seed = seed;
        let (data, truth) = generate(&spec).unwrap();
        let t = truth.change_points[0] as i64;
        let off = (8 + (seed % 15) as i64) * n as i64 / 200;
        let eta_hat = (t + if rep % 2 == 0 { off } else { -off }) as usize;
        let stats = PrefixStats::from_dataset(&data, 3).unwrap();
        let iv = refine_intervals(&[eta_hat], n);
        if !(iv[0].0 < t as f64 && (t as f64) < iv[0].1) {
            continue;
        }
        total += 1;
        let (eta, _) = local_refine(&stats, iv[0].0, iv[0].1, &c_pre, &c_post).unwrap();
        if (eta as i64 - t).abs() <= (eta_hat as i64 - t).abs() {
            ok += 1;
        }
    }
    assert!(total >= 45, "too few bracketing draws: {total}");
    assert!(
        ok * 10 >= total * 9,
        "refinement non-worsening on only {ok}/{total}"
    );
}

#[test]
fn sbs_finds_strong_noiseless_change() {
    // A strong rank-one covariance jump with no measurement noise: SBS with
    // a small threshold lands within 5 of the truth on every seed.
    for rep in 0..10u64 {
        let spec = ScenarioSpec {
            n: 40,
            m: 12,
            delta: 0.9,
            sigma_eps: 0.0,
            change_points: vec![20],
            segments: vec![
                SegmentCov {
                    components: vec![(1.0, BasisFn::Fourier(2))],
                },
                SegmentCov {
                    components: vec![(16.0, BasisFn::Fourier(2))],
                },
            ],
            seed: derive_seed(7, rep),
        };
        let (data, _) = generate(&spec).unwrap();
        let cps = sbs_segment(&data, 2, 0.0, 1.0, 1.0, &Default::default()).unwrap();
        assert!(
            cps.iter().any(|&c| (c as i64 - 20).abs() <= 5),
            "seed {rep}: change points {cps:?}"
        );
    }
}
