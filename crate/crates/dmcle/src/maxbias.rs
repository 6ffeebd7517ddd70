//! Analytic worst-case bias bound under the drift model: the first m_star
//! of m sub-models sit at theta_0 + delta instead of theta_0.

use crate::error::{Error, Result};

/// |delta| / (1 + (c1/c2)(m/m_star - 1) exp(alpha1_star delta^2 h1 / 2)).
///
/// The exponential is the tilt advantage of the compatible units: at the
/// common fit point their expected log-likelihood exceeds an incompatible
/// unit's by delta^2 h1 / 2 (the KL gap of the drift), so their weight
/// grows like exp(alpha1_star delta^2 h1 / 2) relative to the drifted
/// ones. `c1`/`c2` bound the unit Fisher information from below/above and
/// `h1` is the information at theta_0. With m_star = 0 there is nothing
/// incompatible and the bound is zero by convention. With alpha1_star = 0
/// and c1 = c2 the bound is the linear |delta| m_star / m; for
/// alpha1_star > 0 it is bounded and vanishes as |delta| grows.
pub fn max_bias_bound(
    delta: f64,
    m: usize,
    m_star: usize,
    alpha1_star: f64,
    c1: f64,
    c2: f64,
    h1_theta0: f64,
) -> Result<f64> {
    if m < 2 {
        return Err(Error::Validation(format!("need m >= 2 sub-models, got {m}")));
    }
    if m_star == 0 {
        return Ok(0.0);
    }
    if 2 * m_star >= m {
        return Err(Error::Validation(format!(
            "m_star = {m_star} must satisfy m_star < m/2 with m = {m}"
        )));
    }
    if !(c1 > 0.0 && c2 > 0.0 && h1_theta0 > 0.0) {
        return Err(Error::Validation(
            "c1, c2 and h1_theta0 must be positive".to_string(),
        ));
    }
    if !(alpha1_star >= 0.0) {
        return Err(Error::Validation(format!(
            "alpha1_star must be non-negative, got {alpha1_star}"
        )));
    }
    let ratio = m as f64 / m_star as f64 - 1.0;
    let advantage = (alpha1_star * delta * delta * h1_theta0 / 2.0).exp();
    Ok(delta.abs() / (1.0 + (c1 / c2) * ratio * advantage))
}
