//! Fourier basis evaluation and closed-form roughness-penalty matrices.
//!
//! The basis is `phi_1(t) = 1`, `phi_{2k}(t) = cos(2k pi t)`,
//! `phi_{2k+1}(t) = sin(2k pi t)` for `k >= 1`. Paper-style 1-based basis
//! indices map to 0-based storage throughout the crate: entry `i` of a basis
//! vector holds `phi_{i+1}`.
//!
//! Note that this family is orthogonal but not orthonormal on `[0, 1]`: the
//! non-constant functions have squared norm 1/2. The Gram matrix `U` below is
//! therefore `diag(1, 1/2, ..., 1/2)` rather than the identity, which is what
//! makes the quadratic-form roughness agree exactly with the double integral
//! it represents.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Gram matrices of the basis and its first two derivatives.
///
/// `u[h][l] = ∫ phi_h phi_l`, `v[h][l] = ∫ phi_h' phi_l'`,
/// `w[h][l] = ∫ phi_h'' phi_l''`, all over `[0, 1]`. For the Fourier basis
/// all three are diagonal.
#[derive(Debug, Clone)]
pub struct PenaltyMatrices {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

impl PenaltyMatrices {
    pub fn r(&self) -> usize {
        self.u.nrows()
    }
}

/// Frequency of the 0-based basis index: 0 for the constant, `k` for the
/// cos/sin pair at angular frequency `2 k pi`.
fn frequency(idx: usize) -> usize {
    idx.div_ceil(2)
}

/// Evaluate the first `r` Fourier basis functions at `t`, writing into `out`.
pub fn fourier_eval_into(t: f64, out: &mut [f64]) {
    debug_assert!(!out.is_empty());
    out[0] = 1.0;
    let mut k = 1usize;
    let mut i = 1usize;
    while i < out.len() {
        let arg = 2.0 * k as f64 * PI * t;
        let (s, c) = arg.sin_cos();
        out[i] = c;
        if i + 1 < out.len() {
            out[i + 1] = s;
        }
        i += 2;
        k += 1;
    }
}

/// Evaluate the first `r` Fourier basis functions at `t`.
///
/// Entry 0 is always 1; entries `2k-1` and `2k` (0-based) hold
/// `cos(2k pi t)` and `sin(2k pi t)`.
pub fn fourier_eval(t: f64, r: usize) -> Result<Vec<f64>> {
    if r == 0 {
        return Err(Error::InvalidArgument(
            "truncation level r must be at least 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!(
            "evaluation point t = {t} outside [0, 1]"
        )));
    }
    let mut out = vec![0.0; r];
    fourier_eval_into(t, &mut out);
    Ok(out)
}

/// Closed-form Gram matrices for the Fourier basis at truncation `r`.
///
/// For the cos/sin pair at frequency `k`: the squared norm is 1/2, the
/// first-derivative entry is `(2 k pi)^2 / 2 = 2 k^2 pi^2` and the
/// second-derivative entry is `(2 k pi)^4 / 2 = 8 k^4 pi^4`.
pub fn penalty_matrices(r: usize) -> Result<PenaltyMatrices> {
    if r == 0 {
        return Err(Error::InvalidArgument(
            "truncation level r must be at least 1".into(),
        ));
    }
    let mut u = DMatrix::zeros(r, r);
    let mut v = DMatrix::zeros(r, r);
    let mut w = DMatrix::zeros(r, r);
    for i in 0..r {
        if i == 0 {
            u[(0, 0)] = 1.0;
        } else {
            let k = frequency(i) as f64;
            let omega2 = (2.0 * k * PI).powi(2);
            u[(i, i)] = 0.5;
            v[(i, i)] = 0.5 * omega2;
            w[(i, i)] = 0.5 * omega2 * omega2;
        }
    }
    Ok(PenaltyMatrices { u, v, w })
}

/// Roughness of the covariance surface `Sigma(s, t) = Phi(s)^T C Phi(t)`:
/// the integrated squared second derivatives
/// `∫∫ (d²Σ/ds²)² + 2 (d²Σ/ds dt)² + (d²Σ/dt²)² ds dt`,
/// evaluated as `tr(WCUC) + 2 tr(VCVC) + tr(UCWC)`.
pub fn roughness(c: &DMatrix<f64>, p: &PenaltyMatrices) -> Result<f64> {
    let r = p.r();
    if c.nrows() != r || c.ncols() != r {
        return Err(Error::DimensionMismatch(format!(
            "coefficient matrix is {}x{}, penalty matrices are {}x{}",
            c.nrows(),
            c.ncols(),
            r,
            r
        )));
    }
    let asym = (c - c.transpose()).abs().max();
    if asym > 1e-8 * c.abs().max().max(1.0) {
        return Err(Error::InvalidArgument(
            "coefficient matrix must be symmetric".into(),
        ));
    }
    let wcuc = (&p.w * c * &p.u * c).trace();
    let vcvc = (&p.v * c * &p.v * c).trace();
    let ucwc = (&p.u * c * &p.w * c).trace();
    Ok(wcuc + 2.0 * vcvc + ucwc)
}

/// First derivative of the 0-based basis function `idx` at `t`. Used by the
/// quadrature cross-checks.
pub fn fourier_deriv(idx: usize, t: f64) -> f64 {
    if idx == 0 {
        return 0.0;
    }
    let k = frequency(idx) as f64;
    let omega = 2.0 * k * PI;
    if idx % 2 == 1 {
        // cosine entry
        -omega * (omega * t).sin()
    } else {
        omega * (omega * t).cos()
    }
}

/// Second derivative of the 0-based basis function `idx` at `t`.
pub fn fourier_deriv2(idx: usize, t: f64) -> f64 {
    if idx == 0 {
        return 0.0;
    }
    let k = frequency(idx) as f64;
    let omega = 2.0 * k * PI;
    let omega2 = omega * omega;
    if idx % 2 == 1 {
        -omega2 * (omega * t).cos()
    } else {
        -omega2 * (omega * t).sin()
    }
}
