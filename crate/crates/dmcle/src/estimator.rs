//! The alternating estimation algorithm and its companions: xi selection
//! and compatibility profiles.
//!
//! One outer iteration (i) evaluates the sub-likelihood values at the
//! current parameter and re-solves the tilted weights for the target
//! divergence, then (ii) runs a damped Newton M-step on the weighted score
//! with the weights held fixed. The loop stops when the relative weight
//! change drops below tolerance. At xi = 0 the weights are uniform at every
//! step, so the algorithm reduces to a single uniform-weight M-step.

use crate::design::CompositeDesign;
use crate::error::{Error, Result};
use crate::weights::{solve_alpha1, WeightVector};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    /// Outer stop: relative weight change below this ends the loop.
    pub weight_tol: f64,
    pub max_outer: usize,
    /// Inner stop: max-norm of the weighted score.
    pub score_tol: f64,
    pub max_inner: usize,
    /// Step halvings per Newton update before giving up.
    pub max_halvings: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            weight_tol: 1e-8,
            max_outer: 200,
            score_tol: 1e-9,
            max_inner: 60,
            max_halvings: 8,
        }
    }
}

/// One outer-iteration snapshot: parameter, weights, and the composite
/// log-likelihood under that iteration's own weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntry {
    pub theta: Vec<f64>,
    pub weights: Vec<f64>,
    pub composite_loglik: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: Vec<f64>,
    pub xi: f64,
    pub weights: WeightVector,
    pub alpha1: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
    /// Filled in by `variance::sandwich_variance` + `FitResult::set_variance`.
    pub se: Option<Vec<f64>>,
    pub h: Option<DMatrix<f64>>,
    pub k: Option<DMatrix<f64>>,
    pub clic: Option<f64>,
}

impl FitResult {
    pub fn set_variance(&mut self, h: DMatrix<f64>, k: DMatrix<f64>, se: Vec<f64>) {
        self.h = Some(h);
        self.k = Some(k);
        self.se = Some(se);
    }

    pub fn h_rows(&self) -> Option<Vec<Vec<f64>>> {
        self.h.as_ref().map(matrix_rows)
    }

    pub fn k_rows(&self) -> Option<Vec<Vec<f64>>> {
        self.k.as_ref().map(matrix_rows)
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

/// Damped Newton on the weighted score with fixed weights. A step is
/// accepted when the composite log-likelihood does not decrease or the
/// score norm shrinks (the latter matters for estimating-function units
/// whose score is not a likelihood gradient). Returns whether the score
/// tolerance was met.
fn m_step(
    design: &CompositeDesign,
    theta: &mut Vec<f64>,
    w: &WeightVector,
    opts: &FitOptions,
) -> Result<bool> {
    let p = design.param_dim();
    for _ in 0..opts.max_inner {
        let s = design.weighted_score(theta, w)?;
        let snorm = s.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if snorm <= opts.score_tol {
            return Ok(true);
        }
        let jac = design.weighted_hessian(theta, w)?;
        let rhs = DVector::from_iterator(p, s.iter().map(|&v| -v));
        let delta = match jac.clone().lu().solve(&rhs) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => return Ok(false),
        };
        let base_ll = design.composite_loglik(theta, w)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = theta
                .iter()
                .zip(delta.iter())
                .map(|(t, d)| t + lambda * d)
                .collect();
            let ok = (|| -> Result<bool> {
                let ll = design.composite_loglik(&cand, w)?;
                if ll >= base_ll - 1e-13 {
                    return Ok(true);
                }
                let s_new = design.weighted_score(&cand, w)?;
                let n_new = s_new.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
                Ok(n_new < snorm)
            })();
            if ok.unwrap_or(false) {
                *theta = cand;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Ok(false);
        }
    }
    let s = design.weighted_score(theta, w)?;
    Ok(s.iter().all(|v| v.abs() <= opts.score_tol))
}

/// Discriminative composite likelihood fit at divergence `xi`, started at
/// `theta0`. Non-convergence is reported through the `converged` flag, never
/// silently; infeasible `xi` is an error.
pub fn fit_dmcle(
    design: &CompositeDesign,
    xi: f64,
    theta0: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    if theta0.len() != design.param_dim() {
        return Err(Error::Validation(format!(
            "theta0 has dimension {}, design expects {}",
            theta0.len(),
            design.param_dim()
        )));
    }
    let m = design.m();
    let mut theta = theta0.to_vec();
    let mut w_prev = WeightVector::uniform(m)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut outer = 0;
    let mut alpha1 = 0.0;
    let mut weights = w_prev.clone();

    while outer < opts.max_outer {
        outer += 1;
        let ell = design.sub_loglik_values(&theta)?;
        let tilt = solve_alpha1(&ell, xi)?;
        alpha1 = tilt.alpha1;
        weights = tilt.weights;
        let inner_ok = m_step(design, &mut theta, &weights, opts)?;
        trace.push(TraceEntry {
            theta: theta.clone(),
            weights: weights.to_vec(),
            composite_loglik: design.composite_loglik(&theta, &weights)?,
        });
        if !inner_ok {
            break;
        }
        let mut diff = 0.0;
        let mut norm = 0.0;
        for j in 0..m {
            diff += (weights[j] - w_prev[j]) * (weights[j] - w_prev[j]);
            norm += w_prev[j] * w_prev[j];
        }
        if diff.sqrt() / norm.sqrt() < opts.weight_tol {
            converged = true;
            break;
        }
        w_prev = weights.clone();
    }

    Ok(FitResult {
        theta_hat: theta,
        xi,
        weights,
        alpha1,
        outer_iterations: outer,
        converged,
        trace,
        se: None,
        h: None,
        k: None,
        clic: None,
    })
}

/// Direct uniform-weight M-estimation: one Newton solve of
/// sum_j u_nj(theta)/m = 0. The xi = 0 fit must agree with this to 1e-8.
pub fn fit_uniform_mcle(
    design: &CompositeDesign,
    theta0: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    let mut theta = theta0.to_vec();
    let w = WeightVector::uniform(design.m())?;
    let ok = m_step(design, &mut theta, &w, opts)?;
    let ll = design.composite_loglik(&theta, &w)?;
    Ok(FitResult {
        theta_hat: theta.clone(),
        xi: 0.0,
        weights: w.clone(),
        alpha1: 0.0,
        outer_iterations: 1,
        converged: ok,
        trace: vec![TraceEntry {
            theta,
            weights: w.to_vec(),
            composite_loglik: ll,
        }],
        se: None,
        h: None,
        k: None,
        clic: None,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XiSelectionResult {
    pub grid: Vec<f64>,
    /// One estimate per grid point; None marks a non-converged fit.
    pub estimates: Vec<Option<Vec<f64>>>,
    pub chosen_xi: f64,
    /// False when the stopping rule was never satisfied and `chosen_xi`
    /// fell back to the largest grid value.
    pub selected: bool,
    pub tau: f64,
}

fn validate_grid(design: &CompositeDesign, grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::Selection(format!(
            "grid needs at least two points to compare consecutive estimates, got {}",
            grid.len()
        )));
    }
    if grid[0] != 0.0 {
        return Err(Error::Selection(format!(
            "grid must start at 0, got {}",
            grid[0]
        )));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Selection("grid must be strictly increasing".to_string()));
    }
    let log_m = design.log_m();
    if *grid.last().expect("non-empty") >= log_m {
        return Err(Error::InfeasibleDivergence {
            xi: *grid.last().expect("non-empty"),
            log_m,
        });
    }
    Ok(())
}

/// Sequential warm-started fits over the grid plus the stopping rule
/// xi_hat = min{ xi_i : ||theta_i - theta_{i-1}|| < tau }.
///
/// `tau` defaults to 5% of ||theta_hat at xi = 0||. If the rule never
/// fires, the largest grid value is returned flagged `selected = false`.
pub fn select_xi(
    design: &CompositeDesign,
    grid: &[f64],
    tau: Option<f64>,
    theta0: &[f64],
    opts: &FitOptions,
) -> Result<XiSelectionResult> {
    validate_grid(design, grid)?;
    if let Some(t) = tau {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Selection(format!("tau must be >= 0, got {t}")));
        }
    }

    let mut estimates: Vec<Option<Vec<f64>>> = Vec::with_capacity(grid.len());
    let mut start = theta0.to_vec();
    for &xi in grid {
        let fit = fit_dmcle(design, xi, &start, opts)?;
        if fit.converged {
            start = fit.theta_hat.clone();
            estimates.push(Some(fit.theta_hat));
        } else {
            estimates.push(None);
        }
    }
    if estimates.iter().all(Option::is_none) {
        return Err(Error::Selection(
            "no grid point produced a converged fit".to_string(),
        ));
    }

    let tau = tau.unwrap_or_else(|| {
        let base = estimates[0]
            .as_ref()
            .map(|t| t.iter().map(|x| x * x).sum::<f64>().sqrt())
            .unwrap_or(0.0);
        0.05 * base
    });

    let mut chosen = None;
    for i in 1..grid.len() {
        if let (Some(prev), Some(cur)) = (&estimates[i - 1], &estimates[i]) {
            let dist = prev
                .iter()
                .zip(cur)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist < tau {
                chosen = Some(grid[i]);
                break;
            }
        }
    }

    match chosen {
        Some(xi) => Ok(XiSelectionResult {
            grid: grid.to_vec(),
            estimates,
            chosen_xi: xi,
            selected: true,
            tau,
        }),
        None => Ok(XiSelectionResult {
            grid: grid.to_vec(),
            estimates,
            chosen_xi: *grid.last().expect("non-empty"),
            selected: false,
            tau,
        }),
    }
}

/// Weight trajectories across the xi grid, for compatibility profile
/// plotting by external tools. Row i holds the fitted weights at grid[i].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CppProfile {
    pub grid: Vec<f64>,
    pub labels: Vec<String>,
    /// grid.len() rows of m weights.
    pub weights: Vec<Vec<f64>>,
    pub converged: Vec<bool>,
    pub estimates: Vec<Vec<f64>>,
}

/// Warm-started fits over the grid, emitting the fitted weights per row.
pub fn cpp_profile(
    design: &CompositeDesign,
    grid: &[f64],
    theta0: &[f64],
    opts: &FitOptions,
) -> Result<CppProfile> {
    validate_grid(design, grid)?;
    let mut weights = Vec::with_capacity(grid.len());
    let mut converged = Vec::with_capacity(grid.len());
    let mut estimates = Vec::with_capacity(grid.len());
    let mut start = theta0.to_vec();
    for &xi in grid {
        let fit = fit_dmcle(design, xi, &start, opts)?;
        if fit.converged {
            start = fit.theta_hat.clone();
        }
        weights.push(fit.weights.to_vec());
        converged.push(fit.converged);
        estimates.push(fit.theta_hat);
    }
    Ok(CppProfile {
        grid: grid.to_vec(),
        labels: design.labels(),
        weights,
        converged,
        estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::equicorr::{mean_pairwise_correlation, pairwise_design};
    use crate::models::hetero::{grand_mean, hetero_design, hetero_location_fixed_point};
    use crate::models::rng::CounterRng;
    use crate::models::scenario::{sample_scenario, ScenarioFamily};
    use crate::ObsMatrix;
    use approx::assert_relative_eq;

    fn equicorr_data(eps: f64, n: usize, seed: u64) -> ObsMatrix {
        let fam = ScenarioFamily::EquiCorr {
            d: 5,
            rho0: 0.5,
            eps,
        };
        sample_scenario(&fam, n, &mut CounterRng::new(seed)).unwrap()
    }

    fn hetero_data(m_star: usize, n: usize, seed: u64) -> ObsMatrix {
        let fam = ScenarioFamily::HeteroLocation {
            d: 10,
            mu0: 0.0,
            m_star,
            shift: 1.0,
        };
        sample_scenario(&fam, n, &mut CounterRng::new(seed)).unwrap()
    }

    #[test]
    fn xi_zero_equals_direct_uniform_mcle() {
        let data = equicorr_data(5.0, 50, 40);
        let design = pairwise_design(&data).unwrap();
        let start = [mean_pairwise_correlation(&data)];
        let opts = FitOptions::default();
        let a = fit_dmcle(&design, 0.0, &start, &opts).unwrap();
        let b = fit_uniform_mcle(&design, &start, &opts).unwrap();
        assert!(a.converged && b.converged);
        assert!((a.theta_hat[0] - b.theta_hat[0]).abs() <= 1e-8);
        assert_eq!(a.outer_iterations, 1);
    }

    #[test]
    fn example1_estimates_move_toward_truth_with_xi() {
        // eps = 5 scenario: at xi = 0 the estimate sits between
        // rho0/sqrt(5) ~ 0.22 and rho0 = 0.5; near xi = 0.51 it approaches 0.5.
        let data = equicorr_data(5.0, 50, 10);
        let design = pairwise_design(&data).unwrap();
        let start = [mean_pairwise_correlation(&data)];
        let opts = FitOptions::default();
        let at0 = fit_dmcle(&design, 0.0, &start, &opts).unwrap();
        assert!(at0.converged);
        assert!(
            at0.theta_hat[0] > 0.22 && at0.theta_hat[0] < 0.5,
            "xi=0 estimate {}",
            at0.theta_hat[0]
        );
        let at51 = fit_dmcle(&design, 0.51, &at0.theta_hat, &opts).unwrap();
        assert!(at51.converged);
        assert!(
            (at51.theta_hat[0] - 0.5).abs() < 0.05,
            "xi=0.51 estimate {}",
            at51.theta_hat[0]
        );
    }

    #[test]
    fn converged_fit_zeroes_weighted_score_and_refreshes_weights() {
        let data = equicorr_data(3.0, 80, 13);
        let design = pairwise_design(&data).unwrap();
        let opts = FitOptions::default();
        let fit = fit_dmcle(&design, 0.3, &[mean_pairwise_correlation(&data)], &opts).unwrap();
        assert!(fit.converged);
        let s = design.weighted_score(&fit.theta_hat, &fit.weights).unwrap();
        assert!(s[0].abs() <= opts.score_tol);
        // Weights equal the tilt of the sub-likelihood values at theta_hat.
        let ell = design.sub_loglik_values(&fit.theta_hat).unwrap();
        let tilt = crate::weights::solve_alpha1(&ell, 0.3).unwrap();
        for j in 0..design.m() {
            assert!((tilt.weights[j] - fit.weights[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn trace_loglik_is_monotone_for_likelihood_units() {
        let data = equicorr_data(5.0, 60, 99);
        let design = pairwise_design(&data).unwrap();
        let fit = fit_dmcle(
            &design,
            0.4,
            &[mean_pairwise_correlation(&data)],
            &FitOptions::default(),
        )
        .unwrap();
        assert!(fit.converged);
        for w in fit.trace.windows(2) {
            assert!(
                w[1].composite_loglik >= w[0].composite_loglik - 1e-9,
                "trace decreased: {} -> {}",
                w[0].composite_loglik,
                w[1].composite_loglik
            );
        }
    }

    #[test]
    fn hetero_fit_agrees_with_fixed_point() {
        for (m_star, seed) in [(0usize, 1u64), (2, 2), (2, 3)] {
            let data = hetero_data(m_star, 60, seed);
            let design = hetero_design(&data).unwrap();
            for &xi in &[0.0, 0.1, 0.3, 0.6] {
                let fit =
                    fit_dmcle(&design, xi, &[grand_mean(&data)], &FitOptions::default()).unwrap();
                let fp = hetero_location_fixed_point(&data, xi, None, 500, 1e-12).unwrap();
                assert!(fit.converged && fp.converged);
                assert!(
                    (fit.theta_hat[0] - fp.mu).abs() < 1e-6,
                    "xi={xi}: generic {} vs fixed point {}",
                    fit.theta_hat[0],
                    fp.mu
                );
            }
        }
    }

    #[test]
    fn hetero_equal_means_fixed_for_every_xi() {
        let raw = hetero_data(0, 40, 17);
        let cols: Vec<Vec<f64>> = (0..raw.d())
            .map(|j| {
                let m = raw.column_mean(j);
                raw.column(j).iter().map(|x| x - m + 1.25).collect()
            })
            .collect();
        let data = ObsMatrix::from_columns(raw.names().to_vec(), &cols).unwrap();
        let design = hetero_design(&data).unwrap();
        for &xi in &[0.0, 0.2, 0.7] {
            let fit = fit_dmcle(&design, xi, &[0.0], &FitOptions::default()).unwrap();
            assert!(fit.converged);
            assert_relative_eq!(fit.theta_hat[0], 1.25, epsilon = 1e-8);
        }
    }

    #[test]
    fn infeasible_xi_errors_out_of_fit() {
        let data = equicorr_data(1.0, 30, 5);
        let design = pairwise_design(&data).unwrap();
        let err = fit_dmcle(
            &design,
            design.log_m(),
            &[0.3],
            &FitOptions::default(),
        );
        assert!(matches!(err, Err(Error::InfeasibleDivergence { .. })));
    }

    #[test]
    fn exhausted_outer_budget_is_flagged() {
        let data = equicorr_data(5.0, 50, 3);
        let design = pairwise_design(&data).unwrap();
        let opts = FitOptions {
            max_outer: 1,
            weight_tol: 1e-300,
            ..FitOptions::default()
        };
        let fit = fit_dmcle(&design, 0.3, &[0.3], &opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.outer_iterations, 1);
    }

    #[test]
    fn select_xi_compatible_design_picks_first_positive_point() {
        let data = equicorr_data(1.0, 400, 11);
        let design = pairwise_design(&data).unwrap();
        let grid = [0.0, 0.05, 0.1, 0.15];
        let sel = select_xi(
            &design,
            &grid,
            None,
            &[mean_pairwise_correlation(&data)],
            &FitOptions::default(),
        )
        .unwrap();
        assert!(sel.selected);
        assert_eq!(sel.chosen_xi, 0.05);
    }

    #[test]
    fn select_xi_zero_tau_never_fires() {
        let data = equicorr_data(1.0, 100, 2);
        let design = pairwise_design(&data).unwrap();
        let grid = [0.0, 0.1, 0.2];
        let sel = select_xi(&design, &grid, Some(0.0), &[0.3], &FitOptions::default()).unwrap();
        assert!(!sel.selected);
        assert_eq!(sel.chosen_xi, 0.2);
    }

    #[test]
    fn select_xi_needs_two_grid_points() {
        let data = equicorr_data(1.0, 50, 2);
        let design = pairwise_design(&data).unwrap();
        let err = select_xi(&design, &[0.0], None, &[0.3], &FitOptions::default());
        assert!(matches!(err, Err(Error::Selection(_))));
    }

    #[test]
    fn select_xi_example1_stabilizes_near_half() {
        let data = equicorr_data(5.0, 50, 7);
        let design = pairwise_design(&data).unwrap();
        let grid: Vec<f64> = (0..=14).map(|i| i as f64 * 0.05).collect();
        let sel = select_xi(
            &design,
            &grid,
            None,
            &[mean_pairwise_correlation(&data)],
            &FitOptions::default(),
        )
        .unwrap();
        assert!(sel.selected);
        // The stopping rule should fire somewhere in the stabilization
        // region, and the chosen estimate should sit near the truth.
        let idx = grid.iter().position(|&x| x == sel.chosen_xi).unwrap();
        let est = sel.estimates[idx].as_ref().unwrap()[0];
        assert!(
            (est - 0.5).abs() < 0.1,
            "chosen xi {} estimate {est}",
            sel.chosen_xi
        );
    }

    #[test]
    fn cpp_profile_shapes_and_uniform_first_row() {
        let data = equicorr_data(5.0, 50, 7);
        let design = pairwise_design(&data).unwrap();
        let grid = [0.0, 0.25, 0.5];
        let prof = cpp_profile(
            &design,
            &grid,
            &[mean_pairwise_correlation(&data)],
            &FitOptions::default(),
        )
        .unwrap();
        assert_eq!(prof.weights.len(), 3);
        assert_eq!(prof.labels.len(), 10);
        for row in &prof.weights {
            assert_eq!(row.len(), 10);
        }
        for &w in &prof.weights[0] {
            assert_relative_eq!(w, 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn cpp_profile_bottom_trajectories_are_the_incompatible_pairs() {
        let data = equicorr_data(5.0, 50, 7);
        let design = pairwise_design(&data).unwrap();
        let grid = [0.0, 0.5];
        let prof = cpp_profile(
            &design,
            &grid,
            &[mean_pairwise_correlation(&data)],
            &FitOptions::default(),
        )
        .unwrap();
        // Pairs (1,k) are the first four labels in the all-pairs order.
        let row = &prof.weights[1];
        let mut idx: Vec<usize> = (0..10).collect();
        idx.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap());
        let bottom4: Vec<usize> = idx[..4].to_vec();
        for j in 0..4 {
            assert!(
                bottom4.contains(&j),
                "pair_1_{} should be among the four smallest weights; got {idx:?}",
                j + 2
            );
        }
    }

    #[test]
    fn fisher_consistency_mae_halves_when_n_quadruples() {
        // Compatible design: theta_hat converges to rho0 at the sqrt-n rate
        // for every xi.
        let fam = ScenarioFamily::EquiCorr {
            d: 5,
            rho0: 0.5,
            eps: 1.0,
        };
        let opts = FitOptions::default();
        for &xi in &[0.0, 0.2, 0.5] {
            let mae = |n: usize| -> f64 {
                let mut acc = 0.0;
                let mut cnt = 0.0;
                for rep in 0..400u64 {
                    let mut rng = CounterRng::substream(4040 + n as u64, rep);
                    let data = sample_scenario(&fam, n, &mut rng).unwrap();
                    let design = pairwise_design(&data).unwrap();
                    let fit = fit_dmcle(
                        &design,
                        xi,
                        &[mean_pairwise_correlation(&data)],
                        &opts,
                    )
                    .unwrap();
                    if fit.converged {
                        acc += (fit.theta_hat[0] - 0.5).abs();
                        cnt += 1.0;
                    }
                }
                assert!(cnt >= 395.0);
                acc / cnt
            };
            let ratio = mae(400) / mae(100);
            assert!(
                (0.35..=0.65).contains(&ratio),
                "xi={xi}: MAE ratio {ratio} outside 0.5 +/- 30%"
            );
        }
    }

    #[test]
    fn location_estimator_is_asymptotically_normal() {
        // Standardized estimates over replications pass moment-based
        // normality checks at n = 200.
        let fam = ScenarioFamily::HeteroLocation {
            d: 10,
            mu0: 0.0,
            m_star: 0,
            shift: 0.0,
        };
        let mut est = Vec::with_capacity(2000);
        for rep in 0..2000u64 {
            let mut rng = CounterRng::substream(909, rep);
            let data = sample_scenario(&fam, 200, &mut rng).unwrap();
            let fp = crate::models::hetero::hetero_location_fixed_point(
                &data, 0.2, None, 500, 1e-10,
            )
            .unwrap();
            assert!(fp.converged);
            est.push(fp.mu);
        }
        let r = est.len() as f64;
        let mean = est.iter().sum::<f64>() / r;
        let var = est.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / r;
        let sd = var.sqrt();
        let skew = est
            .iter()
            .map(|x| ((x - mean) / sd).powi(3))
            .sum::<f64>()
            / r;
        let kurt = est
            .iter()
            .map(|x| ((x - mean) / sd).powi(4))
            .sum::<f64>()
            / r
            - 3.0;
        assert!(skew.abs() < 0.2, "skewness {skew}");
        assert!(kurt.abs() < 0.5, "excess kurtosis {kurt}");
    }

    #[test]
    fn cpp_profile_near_log_m_concentrates_on_one_unit() {
        let data = equicorr_data(5.0, 50, 7);
        let design = pairwise_design(&data).unwrap();
        let grid = [0.0, design.log_m() - 1e-3];
        let prof = cpp_profile(
            &design,
            &grid,
            &[mean_pairwise_correlation(&data)],
            &FitOptions::default(),
        )
        .unwrap();
        let row = &prof.weights[1];
        let max = row.iter().cloned().fold(0.0f64, f64::max);
        assert!(max > 0.99, "max weight {max}");
    }
}
