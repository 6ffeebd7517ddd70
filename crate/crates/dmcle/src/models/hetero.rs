//! Common location of independent normal columns with heterogeneous
//! variances: the meta-analysis model where each column contributes its own
//! mean estimate and the weights decide the blend.
//!
//! Each unit profiles its variance at the current location,
//! sigma_j^2(mu) = n^-1 sum_i (x_ij - mu)^2, and reports the profiled
//! Gaussian log-likelihood -(1/2) log sigma_j^2(mu) - 1/2 - (1/2) log 2pi.
//! Tilting those values yields weights proportional to
//! {sum_i (x_ij - mu)^2}^(-alpha1/2), a pure power law in the residual sum.
//!
//! The unit's `score` is the model-averaging estimating function
//! u_j(mu) = xbar_j - mu, NOT the gradient of the profiled log-likelihood;
//! the weighted root of sum_j w_j (xbar_j - mu) = 0 is mu = sum_j w_j
//! xbar_j, so the generic alternating fit coincides with the location
//! fixed point below. This is deliberate: the estimator for this family is
//! a weighted average of column means, with compatibility judged by the
//! profiled likelihood values.

use crate::data::ObsMatrix;
use crate::design::{CompositeDesign, SubLikelihoodModel};
use crate::error::{Error, Result};
use crate::weights::{solve_alpha1, SubLikValues, WeightVector};
use nalgebra::DMatrix;

const HALF_LOG_2PI: f64 = 0.9189385332046727;

/// One column as a normal location unit with profiled variance.
pub struct HeteroLocationUnit {
    j: usize,
    col: Vec<f64>,
    xbar: f64,
    mean_sq: f64,
}

impl HeteroLocationUnit {
    pub fn from_column(j: usize, col: Vec<f64>) -> Result<Self> {
        let n = col.len();
        if n < 2 {
            return Err(Error::Validation("location unit needs n >= 2".to_string()));
        }
        let xbar = col.iter().sum::<f64>() / n as f64;
        let mean_sq = col.iter().map(|x| x * x).sum::<f64>() / n as f64;
        if mean_sq - xbar * xbar <= 0.0 {
            return Err(Error::Data(format!(
                "column {} is constant; profiled variance would vanish",
                j + 1
            )));
        }
        Ok(Self {
            j,
            col,
            xbar,
            mean_sq,
        })
    }

    /// Profiled variance at location mu: n^-1 sum (x - mu)^2 > 0.
    pub fn profiled_variance(&self, mu: f64) -> f64 {
        self.mean_sq - 2.0 * mu * self.xbar + mu * mu
    }

    pub fn column_mean(&self) -> f64 {
        self.xbar
    }
}

impl SubLikelihoodModel for HeteroLocationUnit {
    fn label(&self) -> String {
        format!("col_{}", self.j + 1)
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn n_obs(&self) -> usize {
        self.col.len()
    }

    fn per_obs_loglik(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let mu = theta[0];
        let s2 = self.profiled_variance(mu);
        Ok(self
            .col
            .iter()
            .map(|x| -0.5 * s2.ln() - (x - mu) * (x - mu) / (2.0 * s2) - HALF_LOG_2PI)
            .collect())
    }

    fn loglik_avg(&self, theta: &[f64]) -> Result<f64> {
        let s2 = self.profiled_variance(theta[0]);
        Ok(-0.5 * s2.ln() - 0.5 - HALF_LOG_2PI)
    }

    fn per_obs_score(&self, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mu = theta[0];
        Ok(self.col.iter().map(|x| vec![x - mu]).collect())
    }

    fn score(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![self.xbar - theta[0]])
    }

    fn hessian(&self, _theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_element(1, 1, -1.0))
    }
}

/// One unit per column of `data`.
pub fn hetero_design(data: &ObsMatrix) -> Result<CompositeDesign> {
    let units: Result<Vec<Box<dyn SubLikelihoodModel>>> = (0..data.d())
        .map(|j| {
            HeteroLocationUnit::from_column(j, data.column(j))
                .map(|u| Box::new(u) as Box<dyn SubLikelihoodModel>)
        })
        .collect();
    CompositeDesign::new(units?)
}

/// Grand mean over all entries; the moment start value for location fits.
pub fn grand_mean(data: &ObsMatrix) -> f64 {
    let mut acc = 0.0;
    for j in 0..data.d() {
        acc += data.column_mean(j);
    }
    acc / data.d() as f64
}

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub mu: f64,
    pub sigma2: Vec<f64>,
    pub weights: WeightVector,
    pub alpha1: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// Location fixed point: iterates mu <- sum_j w_j(mu) xbar_j with
/// w_j(mu) proportional to {sum_i (x_ij - mu)^2}^(-t), t re-solved each
/// sweep so that the weights sit at KL distance `xi` from uniform.
/// Returns the final profiled variances sigma2_j = n^-1 sum (x - mu)^2.
pub fn hetero_location_fixed_point(
    data: &ObsMatrix,
    xi: f64,
    mu0: Option<f64>,
    max_sweeps: usize,
    tol: f64,
) -> Result<FixedPointResult> {
    let m = data.d();
    if m < 2 {
        return Err(Error::Data("fixed point needs at least 2 columns".to_string()));
    }
    let units: Result<Vec<HeteroLocationUnit>> = (0..m)
        .map(|j| HeteroLocationUnit::from_column(j, data.column(j)))
        .collect();
    let units = units?;
    let xbars: Vec<f64> = units.iter().map(|u| u.column_mean()).collect();

    let mut mu = mu0.unwrap_or_else(|| grand_mean(data));
    let mut last = None;
    let mut converged = false;
    let mut sweeps = 0;
    for sweep in 1..=max_sweeps {
        sweeps = sweep;
        let ell = SubLikValues::new(
            units
                .iter()
                .map(|u| -0.5 * u.profiled_variance(mu).ln() - 0.5 - HALF_LOG_2PI)
                .collect(),
        )?;
        let tilt = solve_alpha1(&ell, xi)?;
        let mu_next: f64 = tilt
            .weights
            .iter()
            .zip(&xbars)
            .map(|(w, xb)| w * xb)
            .sum();
        let moved = (mu_next - mu).abs();
        mu = mu_next;
        last = Some(tilt);
        if moved < tol * (1.0 + mu.abs()) {
            converged = true;
            break;
        }
    }
    let tilt = last.expect("max_sweeps >= 1 always runs one sweep");
    let sigma2 = units.iter().map(|u| u.profiled_variance(mu)).collect();
    Ok(FixedPointResult {
        mu,
        sigma2,
        weights: tilt.weights,
        alpha1: tilt.alpha1,
        sweeps,
        converged,
    })
}
