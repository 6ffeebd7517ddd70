//! True data-generating processes for the simulation studies.

use crate::data::ObsMatrix;
use crate::error::{Error, Result};
use crate::models::rng::CounterRng;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Scenario families with their (possibly incompatible) true structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ScenarioFamily {
    /// d-variate normal, unit variances, Cov(X_1, X_k) = rho0/sqrt(eps) for
    /// k >= 2 and rho0 elsewhere. eps = 1 is the compatible case.
    EquiCorr { d: usize, rho0: f64, eps: f64 },
    /// Independent normals with common mean mu0, variances 1/j, and the
    /// first m_star column means shifted by `shift`.
    HeteroLocation {
        d: usize,
        mu0: f64,
        m_star: usize,
        shift: f64,
    },
}

impl ScenarioFamily {
    pub fn dim(&self) -> usize {
        match self {
            Self::EquiCorr { d, .. } | Self::HeteroLocation { d, .. } => *d,
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            Self::EquiCorr { d, .. } => vec![0.0; *d],
            Self::HeteroLocation {
                d,
                mu0,
                m_star,
                shift,
            } => (0..*d)
                .map(|j| if j < *m_star { mu0 + shift } else { *mu0 })
                .collect(),
        }
    }
}

/// The scenario covariance matrix.
pub fn scenario_covariance(family: &ScenarioFamily) -> Result<DMatrix<f64>> {
    match family {
        ScenarioFamily::EquiCorr { d, rho0, eps } => {
            if *d < 2 {
                return Err(Error::Config("equicorr scenario needs d >= 2".to_string()));
            }
            if !(*eps >= 1.0) {
                return Err(Error::Config(format!(
                    "eps must be >= 1, got {eps}"
                )));
            }
            let mut s = DMatrix::from_element(*d, *d, *rho0);
            let off = rho0 / eps.sqrt();
            for k in 1..*d {
                s[(0, k)] = off;
                s[(k, 0)] = off;
            }
            for j in 0..*d {
                s[(j, j)] = 1.0;
            }
            Ok(s)
        }
        ScenarioFamily::HeteroLocation { d, m_star, .. } => {
            if *d < 2 {
                return Err(Error::Config("hetero scenario needs d >= 2".to_string()));
            }
            if m_star * 2 >= *d {
                return Err(Error::Config(format!(
                    "m_star = {m_star} must be < d/2 = {}",
                    *d as f64 / 2.0
                )));
            }
            let mut s = DMatrix::zeros(*d, *d);
            for j in 0..*d {
                s[(j, j)] = 1.0 / (j + 1) as f64;
            }
            Ok(s)
        }
    }
}

/// Draws n i.i.d. rows from the scenario via Cholesky of its covariance.
/// Deterministic for a given RNG state; errors if the covariance is not
/// positive definite.
pub fn sample_scenario(
    family: &ScenarioFamily,
    n: usize,
    rng: &mut CounterRng,
) -> Result<ObsMatrix> {
    let cov = scenario_covariance(family)?;
    let d = family.dim();
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Config("scenario covariance is not positive definite".to_string()))?;
    let l = chol.l();
    let mean = family.mean();
    let mut data = vec![0.0; n * d];
    let mut z = vec![0.0; d];
    for i in 0..n {
        rng.fill_normals(&mut z);
        for j in 0..d {
            let mut acc = mean[j];
            for k in 0..=j {
                acc += l[(j, k)] * z[k];
            }
            data[i * d + j] = acc;
        }
    }
    let names = (0..d).map(|j| format!("x{}", j + 1)).collect();
    ObsMatrix::new(n, d, names, data)
}
