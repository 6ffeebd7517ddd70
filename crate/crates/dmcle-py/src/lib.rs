//! Python extension module exposing the main estimation types and
//! operations: KL tilting, the family-specific fits, compatibility
//! profiles, the worst-case bias bound and the scenario samplers.

use dmcle::estimator::{cpp_profile, fit_dmcle, select_xi, FitOptions};
use dmcle::models::{
    fit_gev_lmoments, frechet_transform, grand_mean, hetero_design, hetero_location_fixed_point,
    log_chol_from_sigma, mean_pairwise_correlation, pairwise_design, sample_scenario,
    sample_smith_process, sigma_from_log_chol, smith_design, smith_moment_start, CounterRng,
    GevMargin, ScenarioFamily,
};
use dmcle::variance::{clic, sandwich_variance, VarianceMethod};
use dmcle::{CompositeDesign, ObsMatrix};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::str::FromStr;

fn to_py_err(e: dmcle::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<ObsMatrix> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("data must have at least one row"));
    }
    let d = rows[0].len();
    let names = (0..d).map(|j| format!("x{}", j + 1)).collect();
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * d);
    for r in &rows {
        if r.len() != d {
            return Err(PyValueError::new_err("ragged data rows"));
        }
        flat.extend_from_slice(r);
    }
    ObsMatrix::new(n, d, names, flat).map_err(to_py_err)
}

fn rows_from_matrix(m: &ObsMatrix) -> Vec<Vec<f64>> {
    (0..m.n()).map(|i| m.row(i).to_vec()).collect()
}

/// Solution of the KL tilting constraint.
#[pyclass(get_all, skip_from_py_object, module = "dmcle_py")]
#[derive(Clone)]
struct TiltSolution {
    alpha1: f64,
    alpha2: f64,
    weights: Vec<f64>,
    achieved_xi: f64,
}

#[pymethods]
impl TiltSolution {
    fn __repr__(&self) -> String {
        format!(
            "TiltSolution(alpha1={}, achieved_xi={}, m={})",
            self.alpha1,
            self.achieved_xi,
            self.weights.len()
        )
    }
}

/// Result of a discriminative composite likelihood fit.
#[pyclass(get_all, skip_from_py_object, module = "dmcle_py")]
#[derive(Clone)]
struct FitResult {
    theta_hat: Vec<f64>,
    xi: f64,
    alpha1: f64,
    weights: Vec<f64>,
    labels: Vec<String>,
    converged: bool,
    outer_iterations: usize,
    se: Option<Vec<f64>>,
    clic: Option<f64>,
}

#[pymethods]
impl FitResult {
    fn __repr__(&self) -> String {
        format!(
            "FitResult(theta_hat={:?}, xi={}, converged={})",
            self.theta_hat, self.xi, self.converged
        )
    }
}

fn run_fit(
    design: &CompositeDesign,
    xi: f64,
    moment_start: &[f64],
    variance: Option<&str>,
) -> PyResult<FitResult> {
    let opts = FitOptions::default();
    // Initialization: the uniform-weight McLE solved from the moment start.
    let warm = dmcle::estimator::fit_uniform_mcle(design, moment_start, &opts).map_err(to_py_err)?;
    let start = if warm.converged {
        warm.theta_hat
    } else {
        moment_start.to_vec()
    };
    let mut fit = fit_dmcle(design, xi, &start, &opts).map_err(to_py_err)?;
    if fit.converged {
        if let Some(method) = variance {
            let method = VarianceMethod::from_str(method).map_err(to_py_err)?;
            let var = sandwich_variance(design, &fit, method).map_err(to_py_err)?;
            fit.set_variance(var.h, var.k, var.se);
            fit.clic = Some(clic(design, &fit).map_err(to_py_err)?);
        }
    }
    Ok(FitResult {
        theta_hat: fit.theta_hat,
        xi: fit.xi,
        alpha1: fit.alpha1,
        weights: fit.weights.to_vec(),
        labels: design.labels(),
        converged: fit.converged,
        outer_iterations: fit.outer_iterations,
        se: fit.se,
        clic: fit.clic,
    })
}

/// KL divergence of a weight vector from uniform: sum_j w_j log(m w_j).
#[pyfunction]
fn kl_divergence(weights: Vec<f64>) -> PyResult<f64> {
    let w = dmcle::WeightVector::new(weights).map_err(to_py_err)?;
    Ok(dmcle::kl_divergence(&w))
}

/// Weights proportional to exp(alpha1 * ell_j), normalized.
#[pyfunction]
fn tilt_weights(ell: Vec<f64>, alpha1: f64) -> PyResult<Vec<f64>> {
    let ell = dmcle::SubLikValues::new(ell).map_err(to_py_err)?;
    Ok(dmcle::tilt_weights(&ell, alpha1).map_err(to_py_err)?.to_vec())
}

/// Solves KL(w(alpha1)) = xi on the non-negative branch.
#[pyfunction]
fn solve_alpha1(ell: Vec<f64>, xi: f64) -> PyResult<TiltSolution> {
    let ell = dmcle::SubLikValues::new(ell).map_err(to_py_err)?;
    let sol = dmcle::solve_alpha1(&ell, xi).map_err(to_py_err)?;
    Ok(TiltSolution {
        alpha1: sol.alpha1,
        alpha2: sol.alpha2,
        weights: sol.weights.to_vec(),
        achieved_xi: sol.achieved_xi,
    })
}

/// Worst-case bias bound under the drift model.
#[pyfunction]
#[pyo3(signature = (delta, m, m_star, alpha1_star, c1=1.0, c2=1.0, h1_theta0=1.0))]
fn max_bias_bound(
    delta: f64,
    m: usize,
    m_star: usize,
    alpha1_star: f64,
    c1: f64,
    c2: f64,
    h1_theta0: f64,
) -> PyResult<f64> {
    dmcle::max_bias_bound(delta, m, m_star, alpha1_star, c1, c2, h1_theta0).map_err(to_py_err)
}

/// Pairwise-correlation fit on an n x d matrix (rows = observations).
#[pyfunction]
#[pyo3(signature = (data, xi, variance=None))]
fn fit_equicorr(data: Vec<Vec<f64>>, xi: f64, variance: Option<&str>) -> PyResult<FitResult> {
    let m = matrix_from_rows(data)?;
    let design = pairwise_design(&m).map_err(to_py_err)?;
    let start = [mean_pairwise_correlation(&m)];
    run_fit(&design, xi, &start, variance)
}

/// Heterogeneous-variance common-location fit.
#[pyfunction]
#[pyo3(signature = (data, xi, variance=None))]
fn fit_hetero(data: Vec<Vec<f64>>, xi: f64, variance: Option<&str>) -> PyResult<FitResult> {
    let m = matrix_from_rows(data)?;
    let design = hetero_design(&m).map_err(to_py_err)?;
    let start = [grand_mean(&m)];
    run_fit(&design, xi, &start, variance)
}

/// Location fixed point for the heterogeneous-variance family.
/// Returns (mu, sigma2, weights, alpha1, converged).
#[pyfunction]
#[pyo3(signature = (data, xi, mu0=None))]
fn hetero_fixed_point(
    data: Vec<Vec<f64>>,
    xi: f64,
    mu0: Option<f64>,
) -> PyResult<(f64, Vec<f64>, Vec<f64>, f64, bool)> {
    let m = matrix_from_rows(data)?;
    let fp = hetero_location_fixed_point(&m, xi, mu0, 500, 1e-10).map_err(to_py_err)?;
    Ok((fp.mu, fp.sigma2, fp.weights.to_vec(), fp.alpha1, fp.converged))
}

/// Smith max-stable pairwise fit. `data` must be block maxima (rows =
/// years); margins are fitted by L-moments unless supplied as
/// (mu, gamma, zeta) triples per station. theta_hat is in log-Cholesky
/// coordinates; `sigma_hat(fit)` converts.
#[pyfunction]
#[pyo3(signature = (data, coords, xi, margins=None, variance=None))]
fn fit_smith(
    data: Vec<Vec<f64>>,
    coords: Vec<(f64, f64)>,
    xi: f64,
    margins: Option<Vec<(f64, f64, f64)>>,
    variance: Option<&str>,
) -> PyResult<FitResult> {
    let m = matrix_from_rows(data)?;
    let margins: Vec<GevMargin> = match margins {
        Some(list) => list
            .into_iter()
            .map(|(mu, gamma, zeta)| GevMargin::new(mu, gamma, zeta))
            .collect::<Result<_, _>>()
            .map_err(to_py_err)?,
        None => (0..m.d())
            .map(|j| fit_gev_lmoments(&m.column(j)))
            .collect::<Result<_, _>>()
            .map_err(to_py_err)?,
    };
    let cols: Vec<Vec<f64>> = (0..m.d())
        .map(|j| {
            frechet_transform(&m.column(j), &margins[j])
                .map(|t| t.z)
                .map_err(to_py_err)
        })
        .collect::<PyResult<_>>()?;
    let frechet = ObsMatrix::from_columns(m.names().to_vec(), &cols).map_err(to_py_err)?;
    let design = smith_design(&frechet, &coords).map_err(to_py_err)?;
    let start = log_chol_from_sigma(&smith_moment_start(&frechet, &coords))
        .unwrap_or([0.0, 0.0, 0.0]);
    run_fit(&design, xi, &start, variance)
}

/// (sigma11, sigma12, sigma22) from log-Cholesky fit coordinates.
#[pyfunction]
fn sigma_hat(theta: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    if theta.len() != 3 {
        return Err(PyValueError::new_err("theta must have length 3"));
    }
    let s = sigma_from_log_chol(&theta);
    Ok((s[0], s[1], s[2]))
}

/// Weight trajectories over a xi grid for the pairwise-correlation family.
#[pyfunction]
fn cpp_equicorr(data: Vec<Vec<f64>>, grid: Vec<f64>) -> PyResult<(Vec<String>, Vec<Vec<f64>>)> {
    let m = matrix_from_rows(data)?;
    let design = pairwise_design(&m).map_err(to_py_err)?;
    let start = [mean_pairwise_correlation(&m)];
    let prof = cpp_profile(&design, &grid, &start, &FitOptions::default()).map_err(to_py_err)?;
    Ok((prof.labels, prof.weights))
}

/// Stability-rule xi selection for the pairwise-correlation family.
/// Returns (chosen_xi, selected, estimates).
#[pyfunction]
#[pyo3(signature = (data, grid, tau=None))]
fn select_xi_equicorr(
    data: Vec<Vec<f64>>,
    grid: Vec<f64>,
    tau: Option<f64>,
) -> PyResult<(f64, bool, Vec<Option<Vec<f64>>>)> {
    let m = matrix_from_rows(data)?;
    let design = pairwise_design(&m).map_err(to_py_err)?;
    let start = [mean_pairwise_correlation(&m)];
    let sel = select_xi(&design, &grid, tau, &start, &FitOptions::default()).map_err(to_py_err)?;
    Ok((sel.chosen_xi, sel.selected, sel.estimates))
}

/// Draws from the equicorrelated scenario (unit variances, first-row
/// covariances rho0/sqrt(eps)).
#[pyfunction]
fn sample_equicorr(n: usize, d: usize, rho0: f64, eps: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let fam = ScenarioFamily::EquiCorr { d, rho0, eps };
    let m = sample_scenario(&fam, n, &mut CounterRng::new(seed)).map_err(to_py_err)?;
    Ok(rows_from_matrix(&m))
}

/// Draws from the heterogeneous-variance location scenario (variances 1/j,
/// first m_star means shifted).
#[pyfunction]
fn sample_hetero(
    n: usize,
    d: usize,
    mu0: f64,
    m_star: usize,
    shift: f64,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let fam = ScenarioFamily::HeteroLocation {
        d,
        mu0,
        m_star,
        shift,
    };
    let m = sample_scenario(&fam, n, &mut CounterRng::new(seed)).map_err(to_py_err)?;
    Ok(rows_from_matrix(&m))
}

/// Approximate Smith max-stable sampler (truncated storm maxima) on unit
/// Frechet margins.
#[pyfunction]
#[pyo3(signature = (coords, sigma, n, seed, n_storms=5000))]
fn sample_smith(
    coords: Vec<(f64, f64)>,
    sigma: (f64, f64, f64),
    n: usize,
    seed: u64,
    n_storms: usize,
) -> PyResult<Vec<Vec<f64>>> {
    let m = sample_smith_process(
        &coords,
        &[sigma.0, sigma.1, sigma.2],
        n,
        n_storms,
        &mut CounterRng::new(seed),
    )
    .map_err(to_py_err)?;
    Ok(rows_from_matrix(&m))
}

/// Bivariate Smith density on unit Frechet margins.
#[pyfunction]
fn smith_pair_density(
    zj: f64,
    zk: f64,
    h: (f64, f64),
    sigma: (f64, f64, f64),
) -> PyResult<f64> {
    dmcle::models::smith_pair_density(zj, zk, h, &[sigma.0, sigma.1, sigma.2]).map_err(to_py_err)
}

/// Bivariate Smith distribution function.
#[pyfunction]
fn smith_pair_cdf(zj: f64, zk: f64, h: (f64, f64), sigma: (f64, f64, f64)) -> PyResult<f64> {
    dmcle::models::smith_pair_cdf(zj, zk, h, &[sigma.0, sigma.1, sigma.2]).map_err(to_py_err)
}

#[pymodule]
fn dmcle_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<TiltSolution>()?;
    m.add_class::<FitResult>()?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(tilt_weights, m)?)?;
    m.add_function(wrap_pyfunction!(solve_alpha1, m)?)?;
    m.add_function(wrap_pyfunction!(max_bias_bound, m)?)?;
    m.add_function(wrap_pyfunction!(fit_equicorr, m)?)?;
    m.add_function(wrap_pyfunction!(fit_hetero, m)?)?;
    m.add_function(wrap_pyfunction!(hetero_fixed_point, m)?)?;
    m.add_function(wrap_pyfunction!(fit_smith, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_hat, m)?)?;
    m.add_function(wrap_pyfunction!(cpp_equicorr, m)?)?;
    m.add_function(wrap_pyfunction!(select_xi_equicorr, m)?)?;
    m.add_function(wrap_pyfunction!(sample_equicorr, m)?)?;
    m.add_function(wrap_pyfunction!(sample_hetero, m)?)?;
    m.add_function(wrap_pyfunction!(sample_smith, m)?)?;
    m.add_function(wrap_pyfunction!(smith_pair_density, m)?)?;
    m.add_function(wrap_pyfunction!(smith_pair_cdf, m)?)?;
    Ok(())
}
