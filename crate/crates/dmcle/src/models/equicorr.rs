//! Equicorrelated multivariate normal estimated from bivariate pairs.
//!
//! Each unit is the zero-mean bivariate normal likelihood for one column
//! pair with unit variances and common correlation `rho`, summarized by the
//! sufficient statistics SS_jj = sum_i x_ij^2 and SS_jk = sum_i x_ij x_ik.
//! Also provides the full-likelihood reference MLE for the (misspecified)
//! all-correlations-equal model.

use crate::data::ObsMatrix;
use crate::design::{CompositeDesign, SubLikelihoodModel};
use crate::error::{Error, Result};
use nalgebra::DMatrix;

const RHO_LIMIT: f64 = 1.0 - 1e-8;

fn check_rho(rho: f64) -> Result<()> {
    if !rho.is_finite() || rho.abs() > RHO_LIMIT {
        return Err(Error::Domain(format!(
            "correlation must satisfy |rho| <= {RHO_LIMIT}, got {rho}"
        )));
    }
    Ok(())
}

/// Average pairwise log-likelihood from sufficient statistics:
/// [-(n/2) log(1-rho^2) - (SS_jj+SS_kk)/(2(1-rho^2)) + rho SS_jk/(1-rho^2)] / n.
pub fn equicorr_pair_loglik(stats: (f64, f64, f64, usize), rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let (ss_jj, ss_kk, ss_jk, n) = stats;
    let n = n as f64;
    let om = 1.0 - rho * rho;
    Ok((-0.5 * n * om.ln() - (ss_jj + ss_kk) / (2.0 * om) + rho * ss_jk / om) / n)
}

/// Analytic derivative of `equicorr_pair_loglik` in rho.
pub fn equicorr_pair_score(stats: (f64, f64, f64, usize), rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let (ss_jj, ss_kk, ss_jk, n) = stats;
    let n = n as f64;
    let om = 1.0 - rho * rho;
    let a = (ss_jj + ss_kk) / n;
    let b = ss_jk / n;
    Ok(rho / om - a * rho / (om * om) + b * (1.0 + rho * rho) / (om * om))
}

/// Second derivative of the average pairwise log-likelihood.
pub fn equicorr_pair_hessian(stats: (f64, f64, f64, usize), rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let (ss_jj, ss_kk, ss_jk, n) = stats;
    let n = n as f64;
    let om = 1.0 - rho * rho;
    let a = (ss_jj + ss_kk) / n;
    let b = ss_jk / n;
    let om2 = om * om;
    let om3 = om2 * om;
    Ok((1.0 + rho * rho) / om2 - a * (1.0 + 3.0 * rho * rho) / om3
        + b * (6.0 * rho + 2.0 * rho * rho * rho) / om3)
}

/// One column pair treated as a bivariate normal sub-likelihood in the
/// common correlation parameter.
pub struct EquiCorrPairUnit {
    j: usize,
    k: usize,
    xj: Vec<f64>,
    xk: Vec<f64>,
    ss_jj: f64,
    ss_kk: f64,
    ss_jk: f64,
}

impl EquiCorrPairUnit {
    pub fn from_columns(j: usize, k: usize, xj: Vec<f64>, xk: Vec<f64>) -> Result<Self> {
        if xj.len() != xk.len() || xj.len() < 2 {
            return Err(Error::Validation(
                "pair unit needs two equal-length columns with n >= 2".to_string(),
            ));
        }
        let ss_jj = xj.iter().map(|x| x * x).sum();
        let ss_kk = xk.iter().map(|x| x * x).sum();
        let ss_jk = xj.iter().zip(&xk).map(|(a, b)| a * b).sum();
        Ok(Self {
            j,
            k,
            xj,
            xk,
            ss_jj,
            ss_kk,
            ss_jk,
        })
    }

    fn stats(&self) -> (f64, f64, f64, usize) {
        (self.ss_jj, self.ss_kk, self.ss_jk, self.xj.len())
    }
}

impl SubLikelihoodModel for EquiCorrPairUnit {
    fn label(&self) -> String {
        format!("pair_{}_{}", self.j + 1, self.k + 1)
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn n_obs(&self) -> usize {
        self.xj.len()
    }

    fn per_obs_loglik(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let rho = theta[0];
        check_rho(rho)?;
        let om = 1.0 - rho * rho;
        Ok(self
            .xj
            .iter()
            .zip(&self.xk)
            .map(|(&x, &y)| -0.5 * om.ln() - (x * x + y * y) / (2.0 * om) + rho * x * y / om)
            .collect())
    }

    fn loglik_avg(&self, theta: &[f64]) -> Result<f64> {
        equicorr_pair_loglik(self.stats(), theta[0])
    }

    fn per_obs_score(&self, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
        let rho = theta[0];
        check_rho(rho)?;
        let om = 1.0 - rho * rho;
        let om2 = om * om;
        Ok(self
            .xj
            .iter()
            .zip(&self.xk)
            .map(|(&x, &y)| {
                vec![rho / om - (x * x + y * y) * rho / om2 + x * y * (1.0 + rho * rho) / om2]
            })
            .collect())
    }

    fn score(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![equicorr_pair_score(self.stats(), theta[0])?])
    }

    fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_element(
            1,
            1,
            equicorr_pair_hessian(self.stats(), theta[0])?,
        ))
    }
}

/// All-pairs composite design over the columns of `data`.
pub fn pairwise_design(data: &ObsMatrix) -> Result<CompositeDesign> {
    let d = data.d();
    if d < 2 {
        return Err(Error::Data("pairwise design needs d >= 2 columns".to_string()));
    }
    let mut units: Vec<Box<dyn SubLikelihoodModel>> = Vec::new();
    for j in 0..d {
        for k in (j + 1)..d {
            units.push(Box::new(EquiCorrPairUnit::from_columns(
                j,
                k,
                data.column(j),
                data.column(k),
            )?));
        }
    }
    CompositeDesign::new(units)
}

/// Average of the pairwise sample correlations; the moment start value for
/// the correlation fits.
pub fn mean_pairwise_correlation(data: &ObsMatrix) -> f64 {
    let d = data.d();
    let n = data.n() as f64;
    let mut acc = 0.0;
    let mut cnt = 0.0;
    for j in 0..d {
        for k in (j + 1)..d {
            let xj = data.column(j);
            let xk = data.column(k);
            let sjj: f64 = xj.iter().map(|x| x * x).sum::<f64>() / n;
            let skk: f64 = xk.iter().map(|x| x * x).sum::<f64>() / n;
            let sjk: f64 = xj.iter().zip(&xk).map(|(a, b)| a * b).sum::<f64>() / n;
            if sjj > 0.0 && skk > 0.0 {
                acc += sjk / (sjj * skk).sqrt();
                cnt += 1.0;
            }
        }
    }
    let r = if cnt > 0.0 { acc / cnt } else { 0.0 };
    r.clamp(-0.99, 0.99)
}

/// Full-likelihood MLE of the all-correlations-equal normal model
/// N_d(0, (1-rho) I + rho J), maximized by damped 1-D Newton on the
/// score over rho in (-1/(d-1) + 1e-6, 1 - 1e-6).
pub fn equicorr_full_mle(data: &ObsMatrix) -> Result<f64> {
    let d = data.d();
    let n = data.n() as f64;
    let beta = (d - 1) as f64;
    // Per-observation moments: T = tr(S), Q = 1' S 1 with S = X'X / n.
    let mut t = 0.0;
    let mut row_sum_sq = 0.0;
    for i in 0..data.n() {
        let row = data.row(i);
        let s: f64 = row.iter().sum();
        row_sum_sq += s * s;
        t += row.iter().map(|x| x * x).sum::<f64>();
    }
    let t = t / n;
    let q = row_sum_sq / n;

    let loglik = |rho: f64| -> f64 {
        let a = 1.0 + beta * rho;
        -0.5 * (beta * (1.0 - rho).ln() + a.ln() + (t - rho * q / a) / (1.0 - rho))
    };
    let dloglik = |rho: f64| -> f64 {
        let a = 1.0 + beta * rho;
        let om = 1.0 - rho;
        -0.5 * (-beta / om + beta / a + (t - rho * q / a) / (om * om) - q / (a * a * om))
    };

    let lo = -1.0 / beta + 1e-6;
    let hi = 1.0 - 1e-6;
    let mut rho = mean_pairwise_correlation(data).clamp(lo + 1e-9, hi - 1e-9);
    let mut g = dloglik(rho);
    for _ in 0..100 {
        if g.abs() <= 1e-11 {
            return Ok(rho);
        }
        let h = 1e-6 * (1.0 + rho.abs());
        let gpp = (dloglik(rho + h) - dloglik(rho - h)) / (2.0 * h);
        let mut step = if gpp.abs() > 1e-300 { -g / gpp } else { g.signum() * 0.1 };
        // Newton can aim at a maximum of the score rather than the loglik;
        // keep ascent by falling back to the gradient direction.
        if step * g < 0.0 {
            step = g.signum() * step.abs();
        }
        let mut lambda = 1.0;
        let base = loglik(rho);
        let mut accepted = false;
        for _ in 0..60 {
            let cand = (rho + lambda * step).clamp(lo, hi);
            if loglik(cand) >= base - 1e-14 {
                let gc = dloglik(cand);
                if gc.abs() < g.abs() || loglik(cand) > base {
                    rho = cand;
                    g = gc;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if g.abs() <= 1e-6 {
        Ok(rho)
    } else {
        // Fall back to a bracketed search for the score root.
        let mut grid_prev = lo;
        let mut f_prev = dloglik(lo);
        for i in 1..=400 {
            let x = lo + (hi - lo) * i as f64 / 400.0;
            let fx = dloglik(x);
            if f_prev == 0.0 {
                return Ok(grid_prev);
            }
            if f_prev.signum() != fx.signum() {
                let (root, _) = crate::solve::brent_root(
                    dloglik, grid_prev, x, f_prev, fx, 1e-14, 1e-11, 200,
                )?;
                return Ok(root);
            }
            grid_prev = x;
            f_prev = fx;
        }
        Err(Error::Domain(
            "equicorrelation MLE: no interior score root".to_string(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::rng::CounterRng;
    use crate::models::scenario::{sample_scenario, ScenarioFamily};
    use approx::assert_relative_eq;

    #[test]
    fn loglik_at_zero_rho_is_neg_half_sum_sq() {
        let stats = (3.0, 5.0, 1.0, 4usize);
        let l = equicorr_pair_loglik(stats, 0.0).unwrap();
        assert_relative_eq!(l, -(3.0 + 5.0) / (2.0 * 4.0), max_relative = 1e-15);
    }

    #[test]
    fn score_at_zero_rho_is_mean_cross_moment() {
        let stats = (3.0, 5.0, 1.7, 4usize);
        let s = equicorr_pair_score(stats, 0.0).unwrap();
        assert_relative_eq!(s, 1.7 / 4.0, max_relative = 1e-15);
    }

    #[test]
    fn score_matches_finite_differences() {
        let mut rng = CounterRng::new(31);
        for _ in 0..100 {
            let n = 5;
            let xj: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
            let xk: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
            let unit = EquiCorrPairUnit::from_columns(0, 1, xj, xk).unwrap();
            let rho = 1.6 * rng.next_uniform() - 0.8;
            let h = 1e-6;
            let fd = (unit.loglik_avg(&[rho + h]).unwrap() - unit.loglik_avg(&[rho - h]).unwrap())
                / (2.0 * h);
            let s = unit.score(&[rho]).unwrap()[0];
            assert_relative_eq!(s, fd, max_relative = 1e-5, epsilon = 1e-8);
        }
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let unit =
            EquiCorrPairUnit::from_columns(0, 1, vec![0.3, -1.0, 0.7], vec![0.5, 0.2, -0.4])
                .unwrap();
        for &rho in &[-0.6, 0.0, 0.45] {
            let h = 1e-5;
            let fd = (unit.score(&[rho + h]).unwrap()[0] - unit.score(&[rho - h]).unwrap()[0])
                / (2.0 * h);
            assert_relative_eq!(
                unit.hessian(&[rho]).unwrap()[(0, 0)],
                fd,
                max_relative = 1e-4
            );
        }
    }

    #[test]
    fn single_observation_maximizer_zeroes_the_score() {
        // n=1, x_j = 1, x_k = 1/2: dense-grid oracle for the cubic score root.
        let stats = (1.0, 0.25, 0.5, 1usize);
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in 0..=200_000 {
            let rho = -0.999 + 1.998 * i as f64 / 200_000.0;
            let l = equicorr_pair_loglik(stats, rho).unwrap();
            if l > best.1 {
                best = (rho, l);
            }
        }
        let (root, fr) = crate::solve::brent_root(
            |r| equicorr_pair_score(stats, r).unwrap(),
            best.0 - 0.01,
            best.0 + 0.01,
            equicorr_pair_score(stats, best.0 - 0.01).unwrap(),
            equicorr_pair_score(stats, best.0 + 0.01).unwrap(),
            1e-14,
            1e-12,
            200,
        )
        .unwrap();
        assert!(fr.abs() <= 1e-12);
        assert!((root - best.0).abs() < 5e-3, "root {root} vs argmax {}", best.0);
    }

    #[test]
    fn perfectly_correlated_single_observation_pushes_to_boundary() {
        // x_j = x_k = 1 makes the score cubic factor as (1 - rho)(1 + rho^2):
        // the only root is the boundary rho = 1, so the score stays
        // positive on the whole interior.
        let stats = (1.0, 1.0, 1.0, 1usize);
        for i in 0..100 {
            let rho = -0.99 + 1.98 * i as f64 / 99.0;
            assert!(equicorr_pair_score(stats, rho).unwrap() > 0.0);
        }
    }

    #[test]
    fn rejects_out_of_domain_rho() {
        assert!(equicorr_pair_loglik((1.0, 1.0, 0.5, 2), 1.0).is_err());
        assert!(equicorr_pair_score((1.0, 1.0, 0.5, 2), -1.0000001).is_err());
    }

    #[test]
    fn compatible_uniform_estimate_is_unbiased() {
        // eps = 1, xi = 0, n = 200: |mean bias| < 0.01 over 500 replications.
        use crate::estimator::{fit_dmcle, FitOptions};
        let fam = ScenarioFamily::EquiCorr {
            d: 5,
            rho0: 0.5,
            eps: 1.0,
        };
        let opts = FitOptions::default();
        let mut acc = 0.0;
        let mut cnt = 0.0;
        for rep in 0..500u64 {
            let mut rng = CounterRng::substream(606, rep);
            let data = sample_scenario(&fam, 200, &mut rng).unwrap();
            let design = pairwise_design(&data).unwrap();
            let fit = fit_dmcle(&design, 0.0, &[mean_pairwise_correlation(&data)], &opts).unwrap();
            if fit.converged {
                acc += fit.theta_hat[0] - 0.5;
                cnt += 1.0;
            }
        }
        assert!(cnt >= 495.0);
        let bias = acc / cnt;
        assert!(bias.abs() < 0.01, "mean bias {bias}");
    }

    #[test]
    fn full_mle_recovers_rho_on_compatible_data() {
        let mut rng = CounterRng::new(7);
        let fam = ScenarioFamily::EquiCorr {
            d: 5,
            rho0: 0.5,
            eps: 1.0,
        };
        let data = sample_scenario(&fam, 2000, &mut rng).unwrap();
        let rho = equicorr_full_mle(&data).unwrap();
        assert!((rho - 0.5).abs() < 0.05, "MLE = {rho}");
    }
}
