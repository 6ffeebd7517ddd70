//! GEV margins and the unit Frechet transform used by the max-stable
//! pairwise likelihood.

use crate::error::{Error, Result};
use crate::models::rng::CounterRng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

/// Floor applied to observations that clamp to the lower GEV boundary;
/// the pair density is undefined at exactly zero.
pub const BOUNDARY_FLOOR: f64 = 1e-6;

/// Per-station GEV margin: location mu, scale gamma > 0, shape zeta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevMargin {
    pub mu: f64,
    pub gamma: f64,
    pub zeta: f64,
}

impl GevMargin {
    pub fn new(mu: f64, gamma: f64, zeta: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) || !mu.is_finite() || !zeta.is_finite() {
            return Err(Error::Validation(format!(
                "invalid GEV margin (mu={mu}, gamma={gamma}, zeta={zeta})"
            )));
        }
        Ok(Self { mu, gamma, zeta })
    }
}

/// Result of a margin transform; `boundary_count` flags observations that
/// fell on or below the GEV support boundary and were floored.
#[derive(Debug, Clone)]
pub struct FrechetTransformed {
    pub z: Vec<f64>,
    pub boundary_count: usize,
}

/// Maps observations to unit Frechet scale:
/// z = [1 + zeta (y - mu) / gamma]_+^(1/zeta), with the Gumbel limit
/// exp((y - mu)/gamma) when |zeta| < 1e-10. Boundary zeros are floored at
/// 1e-6 and counted; an all-boundary column is unusable. Values below the
/// floor are lifted to it as well (the pair density is undefined at 0), so
/// the transform stays weakly monotone.
pub fn frechet_transform(y: &[f64], margin: &GevMargin) -> Result<FrechetTransformed> {
    if y.is_empty() {
        return Err(Error::Validation("empty margin column".to_string()));
    }
    let mut boundary = 0usize;
    let mut z = Vec::with_capacity(y.len());
    for &yi in y {
        let s = (yi - margin.mu) / margin.gamma;
        let zi = if margin.zeta.abs() < 1e-10 {
            s.exp()
        } else {
            let t = 1.0 + margin.zeta * s;
            if t <= 0.0 {
                boundary += 1;
                0.0
            } else {
                t.powf(1.0 / margin.zeta)
            }
        };
        z.push(zi.max(BOUNDARY_FLOOR));
    }
    if boundary == y.len() {
        return Err(Error::UnusableMargin(
            "entire column mapped to the support boundary".to_string(),
        ));
    }
    Ok(FrechetTransformed {
        z,
        boundary_count: boundary,
    })
}

/// GEV margin estimation by L-moments (probability weighted moments).
///
/// Uses the classical rational approximation for the shape from the
/// L-skewness, then moment-matches scale and location.
pub fn fit_gev_lmoments(y: &[f64]) -> Result<GevMargin> {
    let n = y.len();
    if n < 5 {
        return Err(Error::Data(format!(
            "need at least 5 observations to fit a GEV margin, got {n}"
        )));
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite observations"));
    let nf = n as f64;
    let mut b0 = 0.0;
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for (idx, &x) in sorted.iter().enumerate() {
        let i = (idx + 1) as f64; // 1-based rank
        b0 += x;
        b1 += (i - 1.0) / (nf - 1.0) * x;
        b2 += (i - 1.0) * (i - 2.0) / ((nf - 1.0) * (nf - 2.0)) * x;
    }
    b0 /= nf;
    b1 /= nf;
    b2 /= nf;
    let l1 = b0;
    let l2 = 2.0 * b1 - b0;
    if l2 <= 0.0 {
        return Err(Error::Data("degenerate sample: zero L-scale".to_string()));
    }
    let l3 = 6.0 * b2 - 6.0 * b1 + b0;
    let tau3 = l3 / l2;

    let c = 2.0 / (3.0 + tau3) - std::f64::consts::LN_2 / 3.0f64.ln();
    let k = 7.8590 * c + 2.9554 * c * c; // k = -zeta
    if k.abs() < 1e-8 {
        // Gumbel limit.
        let gamma_s = l2 / std::f64::consts::LN_2;
        let mu = l1 - gamma_s * 0.5772156649015329;
        return GevMargin::new(mu, gamma_s, 0.0);
    }
    let gk = gamma(1.0 + k);
    let gamma_s = l2 * k / ((1.0 - 2.0f64.powf(-k)) * gk);
    let mu = l1 - gamma_s * (1.0 - gk) / k;
    GevMargin::new(mu, gamma_s, -k)
}

/// Inverse-CDF sampling from the GEV.
pub fn sample_gev(n: usize, margin: &GevMargin, rng: &mut CounterRng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u = rng.next_uniform();
            let e = -u.ln(); // standard exponential
            if margin.zeta.abs() < 1e-10 {
                margin.mu - margin.gamma * e.ln()
            } else {
                margin.mu + margin.gamma * (e.powf(-margin.zeta) - 1.0) / margin.zeta
            }
        })
        .collect()
}
