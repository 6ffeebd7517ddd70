//! Composite likelihood designs: the sub-likelihood unit interface and the
//! weighted aggregates built on top of it.

use crate::error::{Error, Result};
use crate::weights::{SubLikValues, WeightVector};
use nalgebra::DMatrix;

/// One low-dimensional sub-likelihood unit over a fixed data subset.
///
/// Implementors provide per-observation log-likelihoods and scores; the
/// aggregate (average) forms have default implementations, as does a
/// central finite-difference Hessian of the average log-likelihood.
///
/// `score` must be a valid estimating function with root at the unit's own
/// optimum; for honest likelihood units it is the gradient of
/// `loglik_avg`. Units are immutable after construction and evaluation is
/// pure, so sharing across threads is safe.
pub trait SubLikelihoodModel: Send + Sync {
    /// Human-readable subset label, e.g. "pair_1_4" or a station pair.
    fn label(&self) -> String;

    fn param_dim(&self) -> usize;

    fn n_obs(&self) -> usize;

    /// Log-likelihood of each observation at `theta` (nats).
    fn per_obs_loglik(&self, theta: &[f64]) -> Result<Vec<f64>>;

    /// Average log-likelihood: mean of `per_obs_loglik`.
    fn loglik_avg(&self, theta: &[f64]) -> Result<f64> {
        let v = self.per_obs_loglik(theta)?;
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Per-observation score contributions, n rows of length p.
    fn per_obs_score(&self, theta: &[f64]) -> Result<Vec<Vec<f64>>>;

    /// Average score: column means of `per_obs_score`.
    fn score(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let rows = self.per_obs_score(theta)?;
        let p = self.param_dim();
        let n = rows.len() as f64;
        let mut s = vec![0.0; p];
        for row in &rows {
            for (k, &v) in row.iter().enumerate() {
                s[k] += v;
            }
        }
        for v in &mut s {
            *v /= n;
        }
        Ok(s)
    }

    /// Jacobian of the average score (Hessian of `loglik_avg` for honest
    /// likelihood units). Default: central differences on `score` with
    /// step 1e-6 * (1 + |theta_k|), symmetrized.
    fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let p = self.param_dim();
        let mut h = DMatrix::zeros(p, p);
        let mut th = theta.to_vec();
        for k in 0..p {
            let step = 1e-6 * (1.0 + theta[k].abs());
            th[k] = theta[k] + step;
            let up = self.score(&th)?;
            th[k] = theta[k] - step;
            let dn = self.score(&th)?;
            th[k] = theta[k];
            for r in 0..p {
                h[(r, k)] = (up[r] - dn[r]) / (2.0 * step);
            }
        }
        // Symmetrize round-off.
        let ht = h.transpose();
        Ok((h + ht) * 0.5)
    }
}

/// Central finite-difference per-observation scores from per-observation
/// log-likelihoods; used by units without analytic scores.
pub fn fd_per_obs_score(
    unit: &dyn SubLikelihoodModel,
    theta: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let p = unit.param_dim();
    let n = unit.n_obs();
    let mut out = vec![vec![0.0; p]; n];
    let mut th = theta.to_vec();
    for k in 0..p {
        let step = 1e-6 * (1.0 + theta[k].abs());
        th[k] = theta[k] + step;
        let up = unit.per_obs_loglik(&th)?;
        th[k] = theta[k] - step;
        let dn = unit.per_obs_loglik(&th)?;
        th[k] = theta[k];
        for i in 0..n {
            out[i][k] = (up[i] - dn[i]) / (2.0 * step);
        }
    }
    Ok(out)
}

/// An ordered collection of m sub-likelihood units sharing one parameter
/// space, over a common set of n observations.
pub struct CompositeDesign {
    units: Vec<Box<dyn SubLikelihoodModel>>,
    param_dim: usize,
    n: usize,
}

impl CompositeDesign {
    pub fn new(units: Vec<Box<dyn SubLikelihoodModel>>) -> Result<Self> {
        if units.len() < 2 {
            return Err(Error::Validation(format!(
                "composite design needs m >= 2 units, got {}",
                units.len()
            )));
        }
        let param_dim = units[0].param_dim();
        let n = units[0].n_obs();
        if n < 2 {
            return Err(Error::Validation(format!(
                "composite design needs n >= 2 observations, got {n}"
            )));
        }
        for u in &units {
            if u.param_dim() != param_dim {
                return Err(Error::Validation(
                    "all units must share one parameter space".to_string(),
                ));
            }
            if u.n_obs() != n {
                return Err(Error::Validation(
                    "all units must see the same number of observations".to_string(),
                ));
            }
        }
        Ok(Self {
            units,
            param_dim,
            n,
        })
    }

    pub fn m(&self) -> usize {
        self.units.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn unit(&self, j: usize) -> &dyn SubLikelihoodModel {
        self.units[j].as_ref()
    }

    pub fn labels(&self) -> Vec<String> {
        self.units.iter().map(|u| u.label()).collect()
    }

    /// Hard ceiling for feasible divergence targets.
    pub fn log_m(&self) -> f64 {
        (self.m() as f64).ln()
    }

    /// The vector of average sub-likelihood values at `theta`.
    pub fn sub_loglik_values(&self, theta: &[f64]) -> Result<SubLikValues> {
        let ell: Result<Vec<f64>> = self.units.iter().map(|u| u.loglik_avg(theta)).collect();
        SubLikValues::new(ell?)
    }

    /// Weighted composite log-likelihood sum_j w_j ell_nj(theta).
    pub fn composite_loglik(&self, theta: &[f64], w: &WeightVector) -> Result<f64> {
        self.check_weights(w)?;
        let mut acc = 0.0;
        for (j, u) in self.units.iter().enumerate() {
            acc += w[j] * u.loglik_avg(theta)?;
        }
        Ok(acc)
    }

    /// Weighted estimating equation sum_j w_j u_nj(theta).
    pub fn weighted_score(&self, theta: &[f64], w: &WeightVector) -> Result<Vec<f64>> {
        self.check_weights(w)?;
        let mut s = vec![0.0; self.param_dim];
        for (j, u) in self.units.iter().enumerate() {
            if w[j] == 0.0 {
                continue;
            }
            for (k, &v) in u.score(theta)?.iter().enumerate() {
                s[k] += w[j] * v;
            }
        }
        Ok(s)
    }

    /// Jacobian of the weighted score at fixed weights: sum_j w_j H_j(theta).
    pub fn weighted_hessian(&self, theta: &[f64], w: &WeightVector) -> Result<DMatrix<f64>> {
        self.check_weights(w)?;
        let p = self.param_dim;
        let mut h = DMatrix::zeros(p, p);
        for (j, u) in self.units.iter().enumerate() {
            if w[j] == 0.0 {
                continue;
            }
            h += u.hessian(theta)? * w[j];
        }
        Ok(h)
    }

    fn check_weights(&self, w: &WeightVector) -> Result<()> {
        if w.len() != self.m() {
            return Err(Error::Validation(format!(
                "weight vector length {} does not match m = {}",
                w.len(),
                self.m()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod test_units {
    use super::*;

    /// Gaussian location unit with fixed data and unit variance; honest
    /// likelihood unit used for exercising the generic machinery.
    pub struct GaussLocUnit {
        pub name: String,
        pub xs: Vec<f64>,
    }

    impl SubLikelihoodModel for GaussLocUnit {
        fn label(&self) -> String {
            self.name.clone()
        }
        fn param_dim(&self) -> usize {
            1
        }
        fn n_obs(&self) -> usize {
            self.xs.len()
        }
        fn per_obs_loglik(&self, theta: &[f64]) -> Result<Vec<f64>> {
            let mu = theta[0];
            Ok(self
                .xs
                .iter()
                .map(|x| -0.5 * (x - mu) * (x - mu))
                .collect())
        }
        fn per_obs_score(&self, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
            let mu = theta[0];
            Ok(self.xs.iter().map(|x| vec![x - mu]).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_units::GaussLocUnit;
    use super::*;
    use approx::assert_relative_eq;

    fn two_unit_design(a: Vec<f64>, b: Vec<f64>) -> CompositeDesign {
        CompositeDesign::new(vec![
            Box::new(GaussLocUnit {
                name: "a".into(),
                xs: a,
            }),
            Box::new(GaussLocUnit {
                name: "b".into(),
                xs: b,
            }),
        ])
        .unwrap()
    }

    #[test]
    fn uniform_weights_average_two_units() {
        let d = two_unit_design(vec![0.0, 2.0], vec![1.0, 3.0]);
        let w = WeightVector::uniform(2).unwrap();
        let la = d.unit(0).loglik_avg(&[0.5]).unwrap();
        let lb = d.unit(1).loglik_avg(&[0.5]).unwrap();
        assert_relative_eq!(
            d.composite_loglik(&[0.5], &w).unwrap(),
            0.5 * (la + lb),
            max_relative = 1e-15
        );
    }

    #[test]
    fn point_mass_selects_one_unit() {
        let d = two_unit_design(vec![0.0, 2.0], vec![10.0, 12.0]);
        let w = WeightVector::new(vec![1.0, 0.0]).unwrap();
        assert_relative_eq!(
            d.composite_loglik(&[1.0], &w).unwrap(),
            d.unit(0).loglik_avg(&[1.0]).unwrap(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn opposite_scores_cancel_under_uniform_weights() {
        // Means at -1 and +1; at theta = 0 the scores are -(-1) and -(1): s, -s.
        let d = two_unit_design(vec![-1.0, -1.0], vec![1.0, 1.0]);
        let w = WeightVector::uniform(2).unwrap();
        let s = d.weighted_score(&[0.0], &w).unwrap();
        assert!(s[0].abs() < 1e-15);
    }

    #[test]
    fn aggregates_match_per_observation_averages() {
        let d = two_unit_design(vec![0.3, -1.2, 2.2], vec![0.0, 1.0, -1.0]);
        let theta = [0.7];
        for j in 0..2 {
            let u = d.unit(j);
            let per = u.per_obs_loglik(&theta).unwrap();
            assert_relative_eq!(
                u.loglik_avg(&theta).unwrap(),
                per.iter().sum::<f64>() / 3.0,
                epsilon = 1e-12
            );
            let rows = u.per_obs_score(&theta).unwrap();
            let mean: f64 = rows.iter().map(|r| r[0]).sum::<f64>() / 3.0;
            assert_relative_eq!(u.score(&theta).unwrap()[0], mean, epsilon = 1e-12);
        }
    }

    #[test]
    fn default_fd_hessian_matches_analytic() {
        // Gaussian location with unit variance: hessian = -1.
        let u = GaussLocUnit {
            name: "u".into(),
            xs: vec![0.1, 0.5, -0.3],
        };
        let h = u.hessian(&[0.2]).unwrap();
        assert_relative_eq!(h[(0, 0)], -1.0, max_relative = 1e-6);
    }

    #[test]
    fn rejects_mismatched_units() {
        let err = CompositeDesign::new(vec![
            Box::new(GaussLocUnit {
                name: "a".into(),
                xs: vec![0.0, 1.0],
            }) as Box<dyn SubLikelihoodModel>,
            Box::new(GaussLocUnit {
                name: "b".into(),
                xs: vec![0.0, 1.0, 2.0],
            }),
        ]);
        assert!(err.is_err());
    }
}
