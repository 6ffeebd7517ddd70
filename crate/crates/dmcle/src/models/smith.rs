//! Smith (Gaussian) max-stable process: bivariate density/CDF on unit
//! Frechet margins, pairwise sub-likelihood units over stations, and an
//! approximate storm-maxima sampler for synthetic data.
//!
//! With h the station offset and a = a(h) = sqrt(h' Sigma^-1 h) the
//! Mahalanobis distance under the storm-shape covariance, the bivariate
//! distribution function is
//!
//!   F(z_j, z_k) = exp{ -Phi(w)/z_j - Phi(v)/z_k },
//!   w = a/2 + log(z_k/z_j)/a,   v = a - w,
//!
//! which has unit Frechet margins exp(-1/z). Using the identity
//! phi(v) z_j = phi(w) z_k, the mixed partial collapses to
//!
//!   f(z_j, z_k) = F(z_j, z_k) [ Phi(w) Phi(v) / (z_j^2 z_k^2)
//!                               + phi(w) / (a z_j^2 z_k) ],
//!
//! which is the form implemented here; it is validated against a
//! finite-difference mixed partial of F in the tests.
//!
//! The covariance parameter is carried in log-Cholesky coordinates
//! theta = (log l11, l21, log l22), Sigma = L L', which keeps every theta
//! in R^3 on the SPD cone. Scores and Hessians for the pair units are
//! finite differences of the log-density in these coordinates.

use crate::data::ObsMatrix;
use crate::design::{fd_per_obs_score, CompositeDesign, SubLikelihoodModel};
use crate::error::{Error, Result};
use crate::models::rng::CounterRng;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.3989422804014327;

#[inline]
pub(crate) fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

#[inline]
pub(crate) fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Sigma in (sigma11, sigma12, sigma22) form from log-Cholesky coordinates.
pub fn sigma_from_log_chol(theta: &[f64]) -> [f64; 3] {
    let l11 = theta[0].exp();
    let l21 = theta[1];
    let l22 = theta[2].exp();
    [l11 * l11, l11 * l21, l21 * l21 + l22 * l22]
}

/// Log-Cholesky coordinates of an SPD Sigma; errors if Sigma is not SPD.
pub fn log_chol_from_sigma(sigma: &[f64; 3]) -> Result<[f64; 3]> {
    let [s11, s12, s22] = *sigma;
    if !(s11 > 0.0) {
        return Err(Error::Domain(format!("sigma11 must be positive, got {s11}")));
    }
    let l11 = s11.sqrt();
    let l21 = s12 / l11;
    let rem = s22 - l21 * l21;
    if !(rem > 0.0) {
        return Err(Error::Domain(
            "sigma must be positive definite".to_string(),
        ));
    }
    Ok([l11.ln(), l21, rem.sqrt().ln()])
}

fn check_sigma(sigma: &[f64; 3]) -> Result<()> {
    let [s11, s12, s22] = *sigma;
    if !(s11 > 0.0 && s22 > 0.0 && s11 * s22 - s12 * s12 > 0.0) {
        return Err(Error::Domain(format!(
            "sigma = ({s11}, {s12}, {s22}) is not positive definite"
        )));
    }
    Ok(())
}

/// a(h) = sqrt(h' Sigma^-1 h); finite and positive for h != 0. Dependence
/// decays with a: nearby stations (small a) are strongly dependent,
/// distant ones approach independence.
pub fn smith_a(h: (f64, f64), sigma: &[f64; 3]) -> Result<f64> {
    check_sigma(sigma)?;
    let (hx, hy) = h;
    if hx == 0.0 && hy == 0.0 {
        return Err(Error::Domain("station offset h must be nonzero".to_string()));
    }
    let [s11, s12, s22] = *sigma;
    let det = s11 * s22 - s12 * s12;
    let q = (s22 * hx * hx - 2.0 * s12 * hx * hy + s11 * hy * hy) / det;
    if !(q > 0.0) {
        return Err(Error::Domain("h' Sigma^-1 h must be positive".to_string()));
    }
    Ok(q.sqrt())
}

fn check_z(z: f64) -> Result<()> {
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::Domain(format!("z must be positive, got {z}")));
    }
    Ok(())
}

#[inline]
fn wv(a: f64, zj: f64, zk: f64) -> (f64, f64) {
    let w = 0.5 * a + (zk / zj).ln() / a;
    (w, a - w)
}

/// Bivariate Smith distribution function.
pub fn smith_pair_cdf(zj: f64, zk: f64, h: (f64, f64), sigma: &[f64; 3]) -> Result<f64> {
    check_z(zj)?;
    check_z(zk)?;
    let a = smith_a(h, sigma)?;
    let (w, v) = wv(a, zj, zk);
    Ok((-(norm_cdf(w) / zj + norm_cdf(v) / zk)).exp())
}

/// Bivariate Smith density (the mixed partial of `smith_pair_cdf`).
pub fn smith_pair_density(zj: f64, zk: f64, h: (f64, f64), sigma: &[f64; 3]) -> Result<f64> {
    smith_pair_log_density(zj, zk, h, sigma).map(f64::exp)
}

/// Log of the bivariate Smith density, numerically stable for likelihoods.
pub fn smith_pair_log_density(
    zj: f64,
    zk: f64,
    h: (f64, f64),
    sigma: &[f64; 3],
) -> Result<f64> {
    check_z(zj)?;
    check_z(zk)?;
    let a = smith_a(h, sigma)?;
    let (w, v) = wv(a, zj, zk);
    let exponent = -(norm_cdf(w) / zj + norm_cdf(v) / zk);
    let bracket = norm_cdf(w) * norm_cdf(v) / (zj * zj * zk * zk)
        + norm_pdf(w) / (a * zj * zj * zk);
    if !(bracket > 0.0) {
        return Err(Error::Domain(format!(
            "smith density vanished at (z_j, z_k) = ({zj}, {zk})"
        )));
    }
    Ok(exponent + bracket.ln())
}

/// One station pair as a sub-likelihood unit in log-Cholesky coordinates.
pub struct SmithPairUnit {
    label: String,
    zj: Vec<f64>,
    zk: Vec<f64>,
    h: (f64, f64),
}

impl SmithPairUnit {
    pub fn new(label: String, zj: Vec<f64>, zk: Vec<f64>, h: (f64, f64)) -> Result<Self> {
        if zj.len() != zk.len() || zj.len() < 2 {
            return Err(Error::Validation(
                "smith pair unit needs two equal-length columns with n >= 2".to_string(),
            ));
        }
        if zj.iter().chain(zk.iter()).any(|&z| !(z > 0.0)) {
            return Err(Error::Domain(
                "smith pair unit requires strictly positive Frechet-scale data".to_string(),
            ));
        }
        if h.0 == 0.0 && h.1 == 0.0 {
            return Err(Error::Domain("station offset h must be nonzero".to_string()));
        }
        Ok(Self { label, zj, zk, h })
    }
}

impl SubLikelihoodModel for SmithPairUnit {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn param_dim(&self) -> usize {
        3
    }

    fn n_obs(&self) -> usize {
        self.zj.len()
    }

    fn per_obs_loglik(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let sigma = sigma_from_log_chol(theta);
        self.zj
            .iter()
            .zip(&self.zk)
            .map(|(&zj, &zk)| smith_pair_log_density(zj, zk, self.h, &sigma))
            .collect()
    }

    fn per_obs_score(&self, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
        fd_per_obs_score(self, theta)
    }
}

/// All-pairs design over unit-Frechet station columns.
pub fn smith_design(data: &ObsMatrix, coords: &[(f64, f64)]) -> Result<CompositeDesign> {
    let d = data.d();
    if coords.len() != d {
        return Err(Error::Data(format!(
            "got {} coordinates for {d} stations",
            coords.len()
        )));
    }
    let mut units: Vec<Box<dyn SubLikelihoodModel>> = Vec::new();
    for j in 0..d {
        for k in (j + 1)..d {
            let h = (coords[j].0 - coords[k].0, coords[j].1 - coords[k].1);
            units.push(Box::new(SmithPairUnit::new(
                format!("pair_{}_{}", data.names()[j], data.names()[k]),
                data.column(j),
                data.column(k),
                h,
            )?));
        }
    }
    CompositeDesign::new(units)
}

/// Crude starting Sigma: pairwise extremal coefficients theta_jk estimated
/// by 1 / mean(1 / max(z_j, z_k)), inverted through theta = 2 Phi(a/2) to
/// targets a^2 = h' Sigma^-1 h, and least-squares fitted to a diagonal
/// precision. Falls back to the identity.
pub fn smith_moment_start(data: &ObsMatrix, coords: &[(f64, f64)]) -> [f64; 3] {
    let d = data.d();
    let n = data.n();
    let normal = Normal::standard();
    let mut xtx = [0.0f64; 3]; // [sum hx^4, sum hx^2 hy^2, sum hy^4]
    let mut xty = [0.0f64; 2];
    for j in 0..d {
        for k in (j + 1)..d {
            let mut mean_inv_max = 0.0;
            for i in 0..n {
                mean_inv_max += 1.0 / data.get(i, j).max(data.get(i, k));
            }
            mean_inv_max /= n as f64;
            let theta = (1.0 / mean_inv_max).clamp(1.001, 1.999);
            let a = 2.0 * normal.inverse_cdf(theta / 2.0);
            if !(a > 0.0) {
                continue;
            }
            let q = a * a; // target h' Sigma^-1 h
            let hx = coords[j].0 - coords[k].0;
            let hy = coords[j].1 - coords[k].1;
            let (x1, x2) = (hx * hx, hy * hy);
            xtx[0] += x1 * x1;
            xtx[1] += x1 * x2;
            xtx[2] += x2 * x2;
            xty[0] += x1 * q;
            xty[1] += x2 * q;
        }
    }
    let det = xtx[0] * xtx[2] - xtx[1] * xtx[1];
    if det.abs() > 1e-12 {
        // Diagonal precision p_i: p1 hx^2 + p2 hy^2 = a^2.
        let p1 = (xtx[2] * xty[0] - xtx[1] * xty[1]) / det;
        let p2 = (xtx[0] * xty[1] - xtx[1] * xty[0]) / det;
        if p1 > 1e-8 && p2 > 1e-8 {
            return [1.0 / p1, 0.0, 1.0 / p2];
        }
    }
    [1.0, 0.0, 1.0]
}

/// Approximate Smith-process sampler: truncated Poisson storm maxima with
/// `n_storms` storms per replicate over an inflated bounding box of the
/// stations. Exact in the limit of infinitely many storms; adequate for
/// synthetic end-to-end tests.
pub fn sample_smith_process(
    coords: &[(f64, f64)],
    sigma: &[f64; 3],
    n: usize,
    n_storms: usize,
    rng: &mut CounterRng,
) -> Result<ObsMatrix> {
    check_sigma(sigma)?;
    let d = coords.len();
    if d < 2 {
        return Err(Error::Config("need at least 2 stations".to_string()));
    }
    let [s11, s12, s22] = *sigma;
    let det = s11 * s22 - s12 * s12;
    // Inverse covariance for the storm-shape density.
    let (i11, i12, i22) = (s22 / det, -s12 / det, s11 / det);
    let dens_norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
    let shape = |dx: f64, dy: f64| -> f64 {
        dens_norm * (-0.5 * (i11 * dx * dx + 2.0 * i12 * dx * dy + i22 * dy * dy)).exp()
    };

    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for &(x, y) in coords {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    let pad = 4.0 * s11.max(s22).sqrt();
    xmin -= pad;
    xmax += pad;
    ymin -= pad;
    ymax += pad;
    let area = (xmax - xmin) * (ymax - ymin);

    let mut cols = vec![vec![0.0f64; n]; d];
    for i in 0..n {
        let mut gamma_acc = 0.0;
        let mut z = vec![0.0f64; d];
        for _ in 0..n_storms {
            gamma_acc += -rng.next_uniform().ln();
            let intensity = area / gamma_acc;
            let ux = xmin + (xmax - xmin) * rng.next_uniform();
            let uy = ymin + (ymax - ymin) * rng.next_uniform();
            for (j, &(sx, sy)) in coords.iter().enumerate() {
                let val = intensity * shape(ux - sx, uy - sy);
                if val > z[j] {
                    z[j] = val;
                }
            }
            // Later storms have strictly smaller intensity; once even the
            // peak of the shape cannot beat the current minimum, stop.
            if intensity * dens_norm < z.iter().cloned().fold(f64::INFINITY, f64::min) {
                break;
            }
        }
        for j in 0..d {
            cols[j][i] = z[j].max(crate::models::gev::BOUNDARY_FLOOR);
        }
    }
    let names = (0..d).map(|j| format!("s{}", j + 1)).collect();
    ObsMatrix::from_columns(names, &cols)
}
