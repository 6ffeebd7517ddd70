//! Sandwich variance of the fitted parameter and the composite likelihood
//! information criterion.

use crate::design::CompositeDesign;
use crate::error::{Error, Result};
use crate::estimator::FitResult;
use crate::weights::{solve_alpha1, SubLikValues};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMethod {
    /// Empirical covariance of the per-observation weighted scores.
    Plugin,
    /// Delete-one jackknife over observations, re-solving the tilted
    /// weights on each leave-one-out sub-likelihood vector.
    Jackknife,
}

impl std::str::FromStr for VarianceMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plugin" => Ok(Self::Plugin),
            "jackknife" => Ok(Self::Jackknife),
            other => Err(Error::Config(format!(
                "unknown variance method '{other}' (use plugin or jackknife)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SandwichVariance {
    /// Bread: sum_j w_j [H_j(theta_hat) + alpha1 u_j u_j'].
    pub h: DMatrix<f64>,
    /// Meat: variability of the weighted score across observations.
    pub k: DMatrix<f64>,
    /// H^-1 K H^-1 / n.
    pub cov: DMatrix<f64>,
    pub se: Vec<f64>,
}

/// Inverts a symmetric matrix through its eigendecomposition, reporting
/// rank deficiency with the offending eigenvalue magnitude.
fn sym_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max_abs = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let min_abs = eig
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v.abs()));
    if max_abs == 0.0 || min_abs <= 1e-12 * max_abs {
        return Err(Error::RankDeficient {
            min_eigenvalue: min_abs,
        });
    }
    let p = a.nrows();
    let mut inv_diag = DMatrix::zeros(p, p);
    for i in 0..p {
        inv_diag[(i, i)] = 1.0 / eig.eigenvalues[i];
    }
    Ok(&eig.eigenvectors * inv_diag * eig.eigenvectors.transpose())
}

/// Sandwich variance of theta_hat:
/// H = sum_j w_j [H_j + alpha1 u_j u_j'], K from the per-observation
/// weighted scores (plug-in) or by delete-one jackknife, and
/// cov = H^-1 K H^-1 / n.
pub fn sandwich_variance(
    design: &CompositeDesign,
    fit: &FitResult,
    method: VarianceMethod,
) -> Result<SandwichVariance> {
    if !fit.converged {
        return Err(Error::Validation(
            "sandwich variance requires a converged fit".to_string(),
        ));
    }
    let p = design.param_dim();
    let n = design.n();
    let m = design.m();
    let theta = &fit.theta_hat;
    let w = &fit.weights;

    // Bread.
    let mut h = DMatrix::zeros(p, p);
    let mut unit_scores: Vec<Vec<f64>> = Vec::with_capacity(m);
    for j in 0..m {
        let u = design.unit(j);
        let uj = u.score(theta)?;
        if w[j] > 0.0 {
            let uvec = DVector::from_column_slice(&uj);
            h += (u.hessian(theta)? + &uvec * uvec.transpose() * fit.alpha1) * w[j];
        }
        unit_scores.push(uj);
    }

    // Per-observation score rows per unit, shared by both K estimators.
    let mut per_obs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(m);
    for j in 0..m {
        per_obs.push(design.unit(j).per_obs_score(theta)?);
    }

    let k = match method {
        VarianceMethod::Plugin => {
            let mut rows = vec![vec![0.0; p]; n];
            for j in 0..m {
                if w[j] == 0.0 {
                    continue;
                }
                for i in 0..n {
                    for c in 0..p {
                        rows[i][c] += w[j] * per_obs[j][i][c];
                    }
                }
            }
            covariance_of_rows(&rows, 1.0 / n as f64)
        }
        VarianceMethod::Jackknife => {
            let per_obs_ll: Result<Vec<Vec<f64>>> = (0..m)
                .map(|j| design.unit(j).per_obs_loglik(theta))
                .collect();
            let per_obs_ll = per_obs_ll?;
            let ell_full: Vec<f64> = (0..m)
                .map(|j| per_obs_ll[j].iter().sum::<f64>() / n as f64)
                .collect();
            let nf = n as f64;
            let mut rows = vec![vec![0.0; p]; n];
            for (i, row) in rows.iter_mut().enumerate() {
                let ell_loo: Vec<f64> = (0..m)
                    .map(|j| (nf * ell_full[j] - per_obs_ll[j][i]) / (nf - 1.0))
                    .collect();
                let tilt = solve_alpha1(&SubLikValues::new(ell_loo)?, fit.xi)?;
                for j in 0..m {
                    let wj = tilt.weights[j];
                    if wj == 0.0 {
                        continue;
                    }
                    for c in 0..p {
                        let u_loo = (nf * unit_scores[j][c] - per_obs[j][i][c]) / (nf - 1.0);
                        row[c] += wj * u_loo;
                    }
                }
            }
            // K_jack = (n - 1) * sum_i (s_(i) - mean)(s_(i) - mean)'.
            covariance_of_rows(&rows, (n - 1) as f64)
        }
    };

    let h_inv = sym_inverse(&h)?;
    let cov = (&h_inv * &k * &h_inv) / n as f64;
    let se = (0..p).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    Ok(SandwichVariance { h, k, cov, se })
}

/// scale * sum_i (r_i - rbar)(r_i - rbar)'.
fn covariance_of_rows(rows: &[Vec<f64>], scale_per_row: f64) -> DMatrix<f64> {
    let n = rows.len();
    let p = rows[0].len();
    let mut mean = vec![0.0; p];
    for r in rows {
        for (c, &v) in r.iter().enumerate() {
            mean[c] += v;
        }
    }
    for v in &mut mean {
        *v /= n as f64;
    }
    let mut k = DMatrix::zeros(p, p);
    for r in rows {
        for a in 0..p {
            for b in 0..p {
                k[(a, b)] += (r[a] - mean[a]) * (r[b] - mean[b]);
            }
        }
    }
    k * scale_per_row
}

/// Composite likelihood information criterion:
/// CLIC = -2 n ell_n(theta_hat | w_hat) + trace(S^-1 K), where S = -H is
/// the sensitivity matrix. Under a correctly specified single-likelihood
/// model the penalty tends to p, matching the usual information criterion
/// scaling; the first term is scaled by n so both pieces grow with the
/// sample size. Requires the fit to carry variance matrices.
pub fn clic(design: &CompositeDesign, fit: &FitResult) -> Result<f64> {
    if !fit.converged {
        return Err(Error::Validation("CLIC requires a converged fit".to_string()));
    }
    let (h, k) = match (&fit.h, &fit.k) {
        (Some(h), Some(k)) => (h, k),
        _ => {
            return Err(Error::Validation(
                "CLIC requires variance matrices; run sandwich_variance first".to_string(),
            ))
        }
    };
    let ll = design.composite_loglik(&fit.theta_hat, &fit.weights)?;
    let sens_inv = sym_inverse(&(-h.clone()))?;
    let penalty = (sens_inv * k).trace();
    Ok(-2.0 * design.n() as f64 * ll + penalty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{CompositeDesign, SubLikelihoodModel};
    use crate::estimator::{fit_dmcle, FitOptions};
    use crate::models::hetero::{grand_mean, hetero_design};
    use crate::models::rng::CounterRng;
    use crate::models::scenario::{sample_scenario, ScenarioFamily};
    use approx::assert_relative_eq;

    fn normal_column(n: usize, mu: f64, sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = CounterRng::new(seed);
        (0..n).map(|_| mu + sd * rng.next_normal()).collect()
    }

    /// Two copies of the same normal-location column: with uniform weights
    /// this reduces to classical single-model M-estimation.
    fn duplicated_unit_design(col: Vec<f64>) -> CompositeDesign {
        use crate::models::hetero::HeteroLocationUnit;
        CompositeDesign::new(vec![
            Box::new(HeteroLocationUnit::from_column(0, col.clone()).unwrap())
                as Box<dyn SubLikelihoodModel>,
            Box::new(HeteroLocationUnit::from_column(1, col).unwrap()),
        ])
        .unwrap()
    }

    #[test]
    fn reduces_to_classical_normal_mean_sandwich() {
        let n = 4000;
        let sigma = 1.7;
        let col = normal_column(n, 2.0, sigma, 8);
        let design = duplicated_unit_design(col.clone());
        let fit = fit_dmcle(&design, 0.0, &[0.0], &FitOptions::default()).unwrap();
        let var = sandwich_variance(&design, &fit, VarianceMethod::Plugin).unwrap();
        // Closed form: H = -1, K = population variance estimate, so
        // se = sigma_hat / sqrt(n) exactly.
        let mu = fit.theta_hat[0];
        let s2: f64 = col.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n as f64;
        assert_relative_eq!(var.se[0], (s2 / n as f64).sqrt(), max_relative = 1e-10);
        // And close to the true sigma / sqrt(n).
        assert_relative_eq!(var.se[0], sigma / (n as f64).sqrt(), max_relative = 0.05);
    }

    #[test]
    fn xi_zero_drops_the_alpha_correction() {
        let data = sample_scenario(
            &ScenarioFamily::HeteroLocation {
                d: 6,
                mu0: 0.0,
                m_star: 0,
                shift: 0.0,
            },
            80,
            &mut CounterRng::new(3),
        )
        .unwrap();
        let design = hetero_design(&data).unwrap();
        let fit = fit_dmcle(&design, 0.0, &[grand_mean(&data)], &FitOptions::default()).unwrap();
        let var = sandwich_variance(&design, &fit, VarianceMethod::Plugin).unwrap();
        // With alpha1 = 0 the bread is the plain weighted Hessian sum = -1.
        assert_relative_eq!(var.h[(0, 0)], -1.0, max_relative = 1e-12);
    }

    #[test]
    fn plugin_and_jackknife_agree_on_example2() {
        // Monte Carlo comparison across replications.
        let fam = ScenarioFamily::HeteroLocation {
            d: 10,
            mu0: 0.0,
            m_star: 0,
            shift: 0.0,
        };
        let mut ratios = Vec::new();
        for rep in 0..200u64 {
            let data = sample_scenario(&fam, 100, &mut CounterRng::substream(55, rep)).unwrap();
            let design = hetero_design(&data).unwrap();
            let fit =
                fit_dmcle(&design, 0.2, &[grand_mean(&data)], &FitOptions::default()).unwrap();
            if !fit.converged {
                continue;
            }
            let kp = sandwich_variance(&design, &fit, VarianceMethod::Plugin)
                .unwrap()
                .k[(0, 0)];
            let kj = sandwich_variance(&design, &fit, VarianceMethod::Jackknife)
                .unwrap()
                .k[(0, 0)];
            ratios.push(kj / kp);
        }
        assert!(ratios.len() > 190);
        let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!(
            (mean_ratio - 1.0).abs() < 0.25,
            "plug-in vs jackknife mean ratio {mean_ratio}"
        );
    }

    #[test]
    fn requires_converged_fit() {
        let data = sample_scenario(
            &ScenarioFamily::HeteroLocation {
                d: 4,
                mu0: 0.0,
                m_star: 0,
                shift: 0.0,
            },
            30,
            &mut CounterRng::new(4),
        )
        .unwrap();
        let design = hetero_design(&data).unwrap();
        let opts = FitOptions {
            max_outer: 1,
            weight_tol: 1e-300,
            ..FitOptions::default()
        };
        let fit = fit_dmcle(&design, 0.3, &[0.0], &opts).unwrap();
        assert!(!fit.converged);
        assert!(sandwich_variance(&design, &fit, VarianceMethod::Plugin).is_err());
    }

    /// Unit with an identically zero second parameter direction, to force a
    /// singular bread matrix.
    struct FlatUnit {
        xs: Vec<f64>,
    }

    impl SubLikelihoodModel for FlatUnit {
        fn label(&self) -> String {
            "flat".to_string()
        }
        fn param_dim(&self) -> usize {
            2
        }
        fn n_obs(&self) -> usize {
            self.xs.len()
        }
        fn per_obs_loglik(&self, theta: &[f64]) -> crate::error::Result<Vec<f64>> {
            Ok(self
                .xs
                .iter()
                .map(|x| -0.5 * (x - theta[0]) * (x - theta[0]))
                .collect())
        }
        fn per_obs_score(&self, theta: &[f64]) -> crate::error::Result<Vec<Vec<f64>>> {
            Ok(self.xs.iter().map(|x| vec![x - theta[0], 0.0]).collect())
        }
    }

    #[test]
    fn singular_bread_reports_rank_deficiency() {
        // The flat direction makes the bread singular; Newton cannot solve
        // it either, so assemble a converged fit at the known root by hand.
        let xs = normal_column(50, 0.0, 1.0, 12);
        let mu = xs.iter().sum::<f64>() / xs.len() as f64;
        let design = CompositeDesign::new(vec![
            Box::new(FlatUnit { xs: xs.clone() }) as Box<dyn SubLikelihoodModel>,
            Box::new(FlatUnit { xs }),
        ])
        .unwrap();
        let fit = crate::estimator::FitResult {
            theta_hat: vec![mu, 0.0],
            xi: 0.0,
            weights: crate::weights::WeightVector::uniform(2).unwrap(),
            alpha1: 0.0,
            outer_iterations: 1,
            converged: true,
            trace: vec![],
            se: None,
            h: None,
            k: None,
            clic: None,
        };
        match sandwich_variance(&design, &fit, VarianceMethod::Plugin) {
            Err(Error::RankDeficient { min_eigenvalue }) => {
                assert!(min_eigenvalue.abs() < 1e-12);
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    /// Wrapper adding a constant to every per-observation log-likelihood.
    struct ShiftedUnit<U> {
        inner: U,
        c: f64,
    }

    impl<U: SubLikelihoodModel> SubLikelihoodModel for ShiftedUnit<U> {
        fn label(&self) -> String {
            self.inner.label()
        }
        fn param_dim(&self) -> usize {
            self.inner.param_dim()
        }
        fn n_obs(&self) -> usize {
            self.inner.n_obs()
        }
        fn per_obs_loglik(&self, theta: &[f64]) -> crate::error::Result<Vec<f64>> {
            Ok(self
                .inner
                .per_obs_loglik(theta)?
                .into_iter()
                .map(|v| v + self.c)
                .collect())
        }
        fn per_obs_score(&self, theta: &[f64]) -> crate::error::Result<Vec<Vec<f64>>> {
            self.inner.per_obs_score(theta)
        }
    }

    #[test]
    fn clic_shifts_by_minus_two_n_c_under_constant_offset() {
        use crate::models::hetero::HeteroLocationUnit;
        let fam = ScenarioFamily::HeteroLocation {
            d: 5,
            mu0: 0.0,
            m_star: 0,
            shift: 0.0,
        };
        let data = sample_scenario(&fam, 60, &mut CounterRng::new(21)).unwrap();
        let c = 0.37;

        let base = hetero_design(&data).unwrap();
        let shifted = CompositeDesign::new(
            (0..data.d())
                .map(|j| {
                    Box::new(ShiftedUnit {
                        inner: HeteroLocationUnit::from_column(j, data.column(j)).unwrap(),
                        c,
                    }) as Box<dyn SubLikelihoodModel>
                })
                .collect(),
        )
        .unwrap();

        let opts = FitOptions::default();
        let mut f0 = fit_dmcle(&base, 0.2, &[grand_mean(&data)], &opts).unwrap();
        let mut f1 = fit_dmcle(&shifted, 0.2, &[grand_mean(&data)], &opts).unwrap();
        let v0 = sandwich_variance(&base, &f0, VarianceMethod::Plugin).unwrap();
        let v1 = sandwich_variance(&shifted, &f1, VarianceMethod::Plugin).unwrap();
        f0.set_variance(v0.h, v0.k, v0.se);
        f1.set_variance(v1.h, v1.k, v1.se);
        let c0 = clic(&base, &f0).unwrap();
        let c1 = clic(&shifted, &f1).unwrap();
        assert_relative_eq!(c1 - c0, -2.0 * 60.0 * c, epsilon = 1e-6);
    }

    #[test]
    fn clic_penalty_tends_to_parameter_count() {
        // Correctly specified single-likelihood model at large n: the
        // trace penalty approaches p = 1.
        let col = normal_column(20_000, 0.0, 1.0, 31);
        let design = duplicated_unit_design(col);
        let mut fit = fit_dmcle(&design, 0.0, &[0.1], &FitOptions::default()).unwrap();
        let var = sandwich_variance(&design, &fit, VarianceMethod::Plugin).unwrap();
        let ll = design
            .composite_loglik(&fit.theta_hat, &fit.weights)
            .unwrap();
        fit.set_variance(var.h, var.k, var.se);
        let c = clic(&design, &fit).unwrap();
        let penalty = c + 2.0 * design.n() as f64 * ll;
        assert!(
            (penalty - 1.0).abs() < 0.1,
            "penalty {penalty} should be close to p = 1"
        );
    }

    #[test]
    fn clic_requires_variance_matrices() {
        let data = sample_scenario(
            &ScenarioFamily::HeteroLocation {
                d: 4,
                mu0: 0.0,
                m_star: 0,
                shift: 0.0,
            },
            40,
            &mut CounterRng::new(6),
        )
        .unwrap();
        let design = hetero_design(&data).unwrap();
        let fit = fit_dmcle(&design, 0.1, &[0.0], &FitOptions::default()).unwrap();
        assert!(clic(&design, &fit).is_err());
    }

    #[test]
    fn covariance_helper_matches_direct_computation() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 0.0], vec![-1.0, 1.0]];
        let k = covariance_of_rows(&rows, 1.0 / 3.0);
        let mean = [1.0, 1.0];
        let mut expect = [[0.0f64; 2]; 2];
        for r in &rows {
            for a in 0..2 {
                for b in 0..2 {
                    expect[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]) / 3.0;
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                assert_relative_eq!(k[(a, b)], expect[a][b], epsilon = 1e-14);
            }
        }
    }
}
