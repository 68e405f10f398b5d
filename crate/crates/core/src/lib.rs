//! Change point detection, refinement and confidence intervals for the
//! covariance structure of fragmented functional data: curves observed only
//! on short random sub-intervals of `[0, 1]`.
//!
//! The pipeline is: estimate per-interval covariance coefficient matrices by
//! penalized PSD least squares ([`covest`]), locate change points with an
//! l0-penalized dynamic program ([`ffdp`]) or the seeded-binary-segmentation
//! baseline ([`sbs`]), sharpen each estimate with a local scan ([`refine`]),
//! and build Monte-Carlo confidence intervals from the limiting distribution
//! of the refined estimators ([`inference`]). Tuning parameters are selected
//! by an odd/even cross-validation split ([`tuning`]); [`simulate`] generates
//! the benchmark scenarios and [`metrics`] scores runs.

pub mod basis;
pub mod covest;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod ffdp;
pub mod inference;
pub mod metrics;
pub mod refine;
pub mod sbs;
pub mod simulate;
pub mod tuning;

pub use dataset::{pair_set, FragmentedDataset, PairSet};
pub use error::{Error, Result};
