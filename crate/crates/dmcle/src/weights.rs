//! Weight-side mathematics: KL divergence on discrete weight vectors,
//! exponential tilting of sub-likelihood values, and the scalar solver that
//! maps a target divergence `xi` to the tilting constant `alpha1`.
//!
//! The tilted family is `w_j(alpha1) = alpha2 * exp(alpha1 * ell_j)` with
//! `alpha2` the normalizer. Its KL divergence from uniform weights is zero
//! at `alpha1 = 0` and strictly increasing in `alpha1 >= 0` whenever the
//! `ell_j` are not all equal, which is what makes the bracketing + Brent
//! strategy below reliable.

use crate::error::{Error, Result};
use crate::solve::brent_root;
use serde::{Deserialize, Serialize};

/// Threshold below which a tilted weight is clamped to exactly zero and the
/// vector renormalized. KL happily tolerates zero weights.
const WEIGHT_UNDERFLOW: f64 = 1e-300;

/// Tolerance on |KL(w(alpha1)) - xi| for the tilt solver.
pub const XI_SOLVE_TOL: f64 = 1e-10;

/// Maximum Brent iterations for the tilt solver.
const XI_SOLVE_MAX_ITER: usize = 200;

/// A discrete probability vector over m >= 2 sub-likelihood components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Validates non-negativity and normalization (sum within 1e-12 of one).
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.len() < 2 {
            return Err(Error::Validation(format!(
                "weight vector needs m >= 2 components, got {}",
                w.len()
            )));
        }
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Validation(
                "weights must be finite and non-negative".to_string(),
            ));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "weights must sum to 1 within 1e-12, got {sum}"
            )));
        }
        Ok(Self(w))
    }

    /// Uniform weights (1/m, ..., 1/m).
    pub fn uniform(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Validation(format!(
                "weight vector needs m >= 2 components, got {m}"
            )));
        }
        Ok(Self(vec![1.0 / m as f64; m]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.clone()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;
    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}

/// Average per-subset log-likelihood values (nats per observation), one per
/// sub-likelihood component.
#[derive(Debug, Clone, PartialEq)]
pub struct SubLikValues(Vec<f64>);

impl SubLikValues {
    pub fn new(ell: Vec<f64>) -> Result<Self> {
        if ell.len() < 2 {
            return Err(Error::Validation(format!(
                "sub-likelihood vector needs m >= 2 entries, got {}",
                ell.len()
            )));
        }
        if ell.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation(
                "sub-likelihood values must all be finite".to_string(),
            ));
        }
        Ok(Self(ell))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Solution of the tilting constraint for a given divergence target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TiltSolution {
    /// Tilting exponent (non-negative branch).
    pub alpha1: f64,
    /// Normalizer: weights_j = alpha2 * exp(alpha1 * ell_j).
    pub alpha2: f64,
    pub weights: WeightVector,
    /// KL divergence actually attained by `weights`.
    pub achieved_xi: f64,
}

/// KL divergence of `w` from the uniform distribution on m points:
/// sum_j w_j log(m w_j), with 0 log 0 = 0. Lies in [0, log m].
pub fn kl_divergence(w: &WeightVector) -> f64 {
    let m = w.len() as f64;
    let mut acc = 0.0;
    for &wj in w.iter() {
        if wj > 0.0 {
            acc += wj * (m * wj).ln();
        }
    }
    // Guard against tiny negative round-off at (near-)uniform weights.
    acc.max(0.0)
}

/// Weights proportional to exp(alpha1 * ell_j), normalized to sum one.
/// Computed with a max shift so that |alpha1 * ell_j| up to ~700 (and far
/// beyond) cannot overflow.
pub fn tilt_weights(ell: &SubLikValues, alpha1: f64) -> Result<WeightVector> {
    if !alpha1.is_finite() {
        return Err(Error::Validation(format!(
            "alpha1 must be finite, got {alpha1}"
        )));
    }
    let m = ell.len();
    if alpha1 == 0.0 {
        return WeightVector::uniform(m);
    }
    let t: Vec<f64> = ell.as_slice().iter().map(|&l| alpha1 * l).collect();
    let tmax = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = t.iter().map(|&ti| (ti - tmax).exp()).collect();
    let sum: f64 = w.iter().sum();
    for wj in &mut w {
        *wj /= sum;
        if *wj < WEIGHT_UNDERFLOW {
            *wj = 0.0;
        }
    }
    let sum2: f64 = w.iter().sum();
    for wj in &mut w {
        *wj /= sum2;
    }
    WeightVector::new(w)
}

/// KL divergence of the tilted weights as a function of alpha1.
fn kl_at(ell: &SubLikValues, alpha1: f64) -> Result<f64> {
    Ok(kl_divergence(&tilt_weights(ell, alpha1)?))
}

/// log sum_j exp(alpha1 * ell_j), max-shifted.
fn log_sum_exp(ell: &[f64], alpha1: f64) -> f64 {
    let tmax = ell
        .iter()
        .map(|&l| alpha1 * l)
        .fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = ell.iter().map(|&l| (alpha1 * l - tmax).exp()).sum();
    tmax + s.ln()
}

/// Solves KL(w(alpha1)) = xi for alpha1 on the non-negative branch.
///
/// `xi = 0` returns `alpha1 = 0` and exactly uniform weights. For `xi > 0`
/// the bracket `[0, 1]` is expanded by doubling until the KL value exceeds
/// `xi`, then refined by Brent to |KL - xi| <= 1e-10.
///
/// Lower log-likelihood always implies lower weight here: negative alpha1
/// would up-weight incompatible components, so that branch is excluded.
pub fn solve_alpha1(ell: &SubLikValues, xi: f64) -> Result<TiltSolution> {
    let m = ell.len();
    let log_m = (m as f64).ln();
    if !xi.is_finite() || xi < 0.0 {
        return Err(Error::Validation(format!(
            "xi must be finite and non-negative, got {xi}"
        )));
    }
    if xi >= log_m {
        return Err(Error::InfeasibleDivergence { xi, log_m });
    }
    if xi == 0.0 {
        return Ok(TiltSolution {
            alpha1: 0.0,
            alpha2: 1.0 / m as f64,
            weights: WeightVector::uniform(m)?,
            achieved_xi: 0.0,
        });
    }

    let lo_val = ell.as_slice().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi_val = ell
        .as_slice()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if lo_val == hi_val {
        return Err(Error::DegenerateTilt { xi });
    }

    // Expand [0, hi] until the KL value brackets xi. If the maximal ell is
    // tied, KL saturates at log(m / #ties) and the target may be unreachable.
    let mut lo = 0.0;
    let mut f_lo = -xi;
    let mut hi = 1.0;
    let mut f_hi = kl_at(ell, hi)? - xi;
    let mut prev = f_hi;
    while f_hi < 0.0 {
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::UnreachableDivergence {
                xi,
                achievable: prev + xi,
            });
        }
        f_hi = kl_at(ell, hi)? - xi;
        if f_hi < 0.0 && (f_hi - prev).abs() < 1e-15 && hi > 1e12 {
            return Err(Error::UnreachableDivergence {
                xi,
                achievable: f_hi + xi,
            });
        }
        prev = f_hi;
    }

    let kl_fn = |a: f64| kl_at(ell, a).map(|v| v - xi).unwrap_or(f64::NAN);
    let (alpha1, _) = brent_root(
        kl_fn,
        lo,
        hi,
        f_lo,
        f_hi,
        1e-15,
        XI_SOLVE_TOL,
        XI_SOLVE_MAX_ITER,
    )?;
    let weights = tilt_weights(ell, alpha1)?;
    let achieved_xi = kl_divergence(&weights);
    if (achieved_xi - xi).abs() > XI_SOLVE_TOL {
        return Err(Error::Validation(format!(
            "tilt solver stalled: |KL - xi| = {:e}",
            (achieved_xi - xi).abs()
        )));
    }
    let alpha2 = (-log_sum_exp(ell.as_slice(), alpha1)).exp();
    Ok(TiltSolution {
        alpha1,
        alpha2,
        weights,
        achieved_xi,
    })
}
