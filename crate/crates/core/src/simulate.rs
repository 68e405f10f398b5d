//! Generation of fragmented functional datasets with piecewise-constant
//! covariance structure, including the four built-in benchmark scenarios.
//!
//! Each curve `t` lives on a random fragment `[a_t, a_t + delta]` with
//! `a_t ~ Uniform[0, 1 - delta]` and grid points `X_tj = a_t + Uniform[0,
//! delta]`. The curve itself is `f_t(x) = sum_k sqrt(w_k) Z_tk g_k(x)` with
//! independent standard Gaussian scores, so its covariance is
//! `sum_k w_k g_k(s) g_k(u)`; observations add Gaussian noise of standard
//! deviation `sigma_eps`.
//!
//! Randomness is organized as one counter-derived stream per `(purpose, t)`,
//! so generation is reproducible no matter how rows are scheduled.

use crate::dataset::FragmentedDataset;
use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// One covariance component `g` in `Sigma(s, u) = sum w g(s) g(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisFn {
    /// 1-based Fourier index: 1 is the constant, `2k` is `cos(2k pi x)`,
    /// `2k + 1` is `sin(2k pi x)`.
    Fourier(usize),
    /// `sqrt(5) (6x^2 - 6x + 1)`
    Psi1,
    /// `sqrt(2) ln(x + 0.1)`
    Psi2,
    /// `5 (x - 0.5)^2`
    Psi3,
}

impl BasisFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            BasisFn::Fourier(1) => 1.0,
            BasisFn::Fourier(j) => {
                if j % 2 == 0 {
                    let k = (j / 2) as f64;
                    (2.0 * k * PI * x).cos()
                } else {
                    let k = ((j - 1) / 2) as f64;
                    (2.0 * k * PI * x).sin()
                }
            }
            BasisFn::Psi1 => 5f64.sqrt() * (6.0 * x * x - 6.0 * x + 1.0),
            BasisFn::Psi2 => 2f64.sqrt() * (x + 0.1).ln(),
            BasisFn::Psi3 => 5.0 * (x - 0.5) * (x - 0.5),
        }
    }
}

/// Covariance of one stationary segment: a nonnegative mixture of rank-one
/// components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentCov {
    pub components: Vec<(f64, BasisFn)>,
}

impl SegmentCov {
    pub fn covariance(&self, s: f64, u: f64) -> f64 {
        self.components
            .iter()
            .map(|(w, g)| w * g.eval(s) * g.eval(u))
            .sum()
    }
}

/// Generative description of one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    pub m: usize,
    pub delta: f64,
    pub sigma_eps: f64,
    /// True change points, strictly increasing, in `(0, n)`.
    pub change_points: Vec<usize>,
    /// One covariance per segment; `change_points.len() + 1` entries.
    pub segments: Vec<SegmentCov>,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.m < 2 {
            return Err(Error::InvalidArgument("need n >= 2 and m >= 2".into()));
        }
        if !(0.0 < self.delta && self.delta <= 1.0) {
            return Err(Error::InvalidArgument("delta must be in (0, 1]".into()));
        }
        if self.sigma_eps < 0.0 {
            return Err(Error::InvalidArgument("sigma_eps must be >= 0".into()));
        }
        if self.segments.len() != self.change_points.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} change points require {} segments, got {}",
                self.change_points.len(),
                self.change_points.len() + 1,
                self.segments.len()
            )));
        }
        let mut last = 0usize;
        for &cp in &self.change_points {
            if cp <= last || cp >= self.n {
                return Err(Error::InvalidArgument(format!(
                    "change points must be strictly increasing in (0, n): {:?}",
                    self.change_points
                )));
            }
            last = cp;
        }
        for seg in &self.segments {
            if seg.components.iter().any(|(w, _)| *w < 0.0) {
                return Err(Error::InvalidArgument(
                    "component weights must be nonnegative".into(),
                ));
            }
        }
        Ok(())
    }

    /// 0-based segment index covering the 1-based time `t`.
    pub fn segment_of(&self, t: usize) -> usize {
        self.change_points.iter().filter(|&&cp| t > cp).count()
    }
}

/// What the generator knows to be true, for scoring estimators.
#[derive(Debug, Clone, Serialize)]
pub struct GroundTruth {
    pub change_points: Vec<usize>,
    pub segments: Vec<SegmentCov>,
}

impl GroundTruth {
    pub fn segment_covariance(&self, segment: usize, s: f64, u: f64) -> f64 {
        self.segments[segment].covariance(s, u)
    }

    pub fn covariance(&self, t: usize, s: f64, u: f64) -> f64 {
        let seg = self.change_points.iter().filter(|&&cp| t > cp).count();
        self.segment_covariance(seg, s, u)
    }
}

const STREAM_START: u64 = 0;
const STREAM_GRID: u64 = 1;
const STREAM_SCORES: u64 = 2;
const STREAM_NOISE: u64 = 3;

fn stream_rng(seed: u64, purpose: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 48) | (t as u64 + 1));
    rng
}

/// Gaussian scores of curve `t` (1-based), one per covariance component.
pub(crate) fn curve_scores(spec: &ScenarioSpec, t: usize) -> Vec<f64> {
    let seg = &spec.segments[spec.segment_of(t)];
    let mut rng = stream_rng(spec.seed, STREAM_SCORES, t - 1);
    seg.components
        .iter()
        .map(|_| StandardNormal.sample(&mut rng))
        .collect()
}

/// Curve value `f_t(x)` given its scores.
pub(crate) fn curve_value(spec: &ScenarioSpec, t: usize, scores: &[f64], x: f64) -> f64 {
    let seg = &spec.segments[spec.segment_of(t)];
    seg.components
        .iter()
        .zip(scores)
        .map(|((w, g), z)| w.sqrt() * z * g.eval(x))
        .sum()
}

/// Draw one dataset and its ground truth. Deterministic given the spec.
pub fn generate(spec: &ScenarioSpec) -> Result<(FragmentedDataset, GroundTruth)> {
    spec.validate()?;
    let (n, m) = (spec.n, spec.m);
    let mut x = Vec::with_capacity(n * m);
    let mut y = Vec::with_capacity(n * m);
    for t in 1..=n {
        let a_t: f64 = {
            let mut rng = stream_rng(spec.seed, STREAM_START, t - 1);
            rng.random::<f64>() * (1.0 - spec.delta)
        };
        let grid: Vec<f64> = {
            let mut rng = stream_rng(spec.seed, STREAM_GRID, t - 1);
            (0..m).map(|_| a_t + rng.random::<f64>() * spec.delta).collect()
        };
        let scores = curve_scores(spec, t);
        let mut noise_rng = stream_rng(spec.seed, STREAM_NOISE, t - 1);
        for &xv in &grid {
            let noise: f64 = StandardNormal.sample(&mut noise_rng);
            x.push(xv.clamp(0.0, 1.0));
            y.push(curve_value(spec, t, &scores, xv) + spec.sigma_eps * noise);
        }
    }
    let data = FragmentedDataset::new(n, m, x, y, Some(spec.delta))?;
    let truth = GroundTruth {
        change_points: spec.change_points.clone(),
        segments: spec.segments.clone(),
    };
    Ok((data, truth))
}

/// Identifier of a built-in benchmark scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    I,
    II,
    III,
    IV,
}

impl std::str::FromStr for ScenarioId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(ScenarioId::I),
            "ii" | "2" => Ok(ScenarioId::II),
            "iii" | "3" => Ok(ScenarioId::III),
            "iv" | "4" => Ok(ScenarioId::IV),
            other => Err(Error::InvalidArgument(format!(
                "unknown scenario id '{other}'"
            ))),
        }
    }
}

fn fourier_mix(weights: &[f64]) -> SegmentCov {
    SegmentCov {
        components: weights
            .iter()
            .enumerate()
            .map(|(i, &w)| (w, BasisFn::Fourier(i + 1)))
            .collect(),
    }
}

/// The four benchmark parameterizations. `m` falls back to the scenario
/// default (30, 30, 15, 10 respectively) when `None`.
pub fn builtin_scenario(
    id: ScenarioId,
    n: usize,
    m: Option<usize>,
    seed: u64,
) -> Result<ScenarioSpec> {
    if n < 8 {
        return Err(Error::InvalidArgument("scenario needs n >= 8".into()));
    }
    let spec = match id {
        ScenarioId::I => ScenarioSpec {
            n,
            m: m.unwrap_or(30),
            delta: 0.6,
            sigma_eps: 0.01,
            change_points: vec![n / 2],
            segments: vec![
                fourier_mix(&[2.0, 1.4, 0.8]),
                fourier_mix(&[5.0, 4.2, 3.4]),
            ],
            seed,
        },
        ScenarioId::II => ScenarioSpec {
            n,
            m: m.unwrap_or(30),
            delta: 0.6,
            sigma_eps: 1.0,
            change_points: vec![n / 2],
            segments: vec![
                SegmentCov {
                    components: vec![(1.0, BasisFn::Psi1), (0.8, BasisFn::Psi2)],
                },
                SegmentCov {
                    components: vec![(5.0, BasisFn::Psi1), (7.5, BasisFn::Psi3)],
                },
            ],
            seed,
        },
        ScenarioId::III => ScenarioSpec {
            n,
            m: m.unwrap_or(15),
            delta: 0.5,
            sigma_eps: 0.01,
            change_points: vec![n / 4, 5 * n / 8],
            segments: vec![
                fourier_mix(&[1.8, 1.3]),
                fourier_mix(&[8.0, 6.5]),
                fourier_mix(&[1.8, 1.6]),
            ],
            seed,
        },
        ScenarioId::IV => ScenarioSpec {
            n,
            m: m.unwrap_or(10),
            delta: 0.5,
            sigma_eps: 0.1,
            change_points: vec![n / 2],
            segments: vec![
                fourier_mix(&[0.5, 2.0, 1.4]),
                fourier_mix(&[3.5, 4.0, 3.5]),
            ],
            seed,
        },
    };
    spec.validate()?;
    Ok(spec)
}
