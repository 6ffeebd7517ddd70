//! Seeded Monte Carlo studies: bias/variance tables for the two reference
//! scenarios and the worst-case bias curves, with CSV emission and a JSON
//! metadata sidecar.
//!
//! Replication r draws from the counter-based substream (seed, r), so
//! results are bit-identical regardless of thread count or execution
//! order. A replication that fails at any grid point is dropped from every
//! cell of its scenario (paired comparison) and counted under `failures`.

use crate::error::Result;
use crate::estimator::{fit_dmcle, FitOptions};
use crate::maxbias::max_bias_bound;
use crate::models::equicorr::{equicorr_full_mle, mean_pairwise_correlation, pairwise_design};
use crate::models::hetero::hetero_location_fixed_point;
use crate::models::rng::{CounterRng, RNG_ALGORITHM};
use crate::models::scenario::{sample_scenario, ScenarioFamily};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1Config {
    pub d: usize,
    pub rho0: f64,
    pub eps: f64,
    pub n: usize,
    pub replications: usize,
    pub xi_grid: Vec<f64>,
    pub seed: u64,
    pub include_mle: bool,
}

impl Default for Table1Config {
    fn default() -> Self {
        Self {
            d: 5,
            rho0: 0.5,
            eps: 1.0,
            n: 50,
            replications: 2000,
            xi_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            seed: 20240,
            include_mle: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table2Config {
    pub d: usize,
    pub mu0: f64,
    pub m_star: usize,
    pub shift: f64,
    pub n: usize,
    pub replications: usize,
    pub xi_grid: Vec<f64>,
    pub seed: u64,
    pub include_mle: bool,
}

impl Default for Table2Config {
    fn default() -> Self {
        Self {
            d: 10,
            mu0: 0.0,
            m_star: 2,
            shift: 1.0,
            n: 100,
            replications: 2000,
            xi_grid: (0..=7).map(|i| i as f64 / 10.0).collect(),
            seed: 20240,
            include_mle: true,
        }
    }
}

/// One (estimator, xi) cell of a Monte Carlo table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McCell {
    pub estimator: String,
    pub xi: Option<f64>,
    pub bias2_scaled: f64,
    pub var_scaled: f64,
    pub mcse_bias2: f64,
    pub mcse_var: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloTable {
    pub scenario: String,
    pub family: String,
    pub n: usize,
    pub eps: Option<f64>,
    pub m_star: Option<usize>,
    /// Reporting scale applied to bias^2 and variance (100 or 1000).
    pub scale: f64,
    pub replications: usize,
    pub used_replications: usize,
    pub seed: u64,
    pub rng_algorithm: String,
    pub cells: Vec<McCell>,
}

/// bias^2, variance and their Monte Carlo standard errors, scaled.
fn aggregate(values: &[f64], truth: f64, scale: f64) -> (f64, f64, f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    let bias = mean - truth;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
    let se_mean = (var / r).sqrt();
    // Delta method for bias^2, with the second-order term kept so the MCSE
    // stays positive at bias = 0.
    let mcse_bias2 = 2.0 * bias.abs() * se_mean + se_mean * se_mean;
    let m4 = values
        .iter()
        .map(|v| (v - mean).powi(4))
        .sum::<f64>()
        / r;
    let var_of_var = ((m4 - var * var * (r - 3.0) / (r - 1.0)) / r).max(0.0);
    (
        bias * bias * scale,
        var * scale,
        mcse_bias2 * scale,
        var_of_var.sqrt() * scale,
    )
}

fn used(values_per_rep: &[Option<Vec<f64>>]) -> usize {
    values_per_rep.iter().filter(|v| v.is_some()).count()
}

/// Pairwise-likelihood correlation study: per replication fit the reference
/// MLE (optional) and the discriminative fits across the xi grid
/// (warm-started), then aggregate bias^2 x 100 and variance x 100 against
/// rho0.
pub fn run_table1(cfg: &Table1Config) -> Result<MonteCarloTable> {
    let fam = ScenarioFamily::EquiCorr {
        d: cfg.d,
        rho0: cfg.rho0,
        eps: cfg.eps,
    };
    // Surface configuration errors (e.g. non-PSD covariance) immediately.
    crate::models::scenario::scenario_covariance(&fam)?
        .cholesky()
        .ok_or_else(|| {
            crate::error::Error::Config("scenario covariance is not positive definite".to_string())
        })?;
    let opts = FitOptions::default();

    let per_rep: Vec<Option<Vec<f64>>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = CounterRng::substream(cfg.seed, rep);
            let data = sample_scenario(&fam, cfg.n, &mut rng).ok()?;
            let mut out = Vec::with_capacity(cfg.xi_grid.len() + 1);
            if cfg.include_mle {
                out.push(equicorr_full_mle(&data).ok()?);
            }
            let design = pairwise_design(&data).ok()?;
            let mut start = vec![mean_pairwise_correlation(&data)];
            for &xi in &cfg.xi_grid {
                let fit = fit_dmcle(&design, xi, &start, &opts).ok()?;
                if !fit.converged {
                    return None;
                }
                start.clone_from(&fit.theta_hat);
                out.push(fit.theta_hat[0]);
            }
            Some(out)
        })
        .collect();

    let used_replications = used(&per_rep);
    let failures = cfg.replications - used_replications;
    let mut cells = Vec::new();
    let mut col = 0usize;
    if cfg.include_mle {
        let vals: Vec<f64> = per_rep
            .iter()
            .flatten()
            .map(|v| v[col])
            .collect();
        let (b2, var, mb, mv) = aggregate(&vals, cfg.rho0, 100.0);
        cells.push(McCell {
            estimator: "mle".to_string(),
            xi: None,
            bias2_scaled: b2,
            var_scaled: var,
            mcse_bias2: mb,
            mcse_var: mv,
            failures,
        });
        col += 1;
    }
    for (i, &xi) in cfg.xi_grid.iter().enumerate() {
        let vals: Vec<f64> = per_rep
            .iter()
            .flatten()
            .map(|v| v[col + i])
            .collect();
        let (b2, var, mb, mv) = aggregate(&vals, cfg.rho0, 100.0);
        cells.push(McCell {
            estimator: "dmcle".to_string(),
            xi: Some(xi),
            bias2_scaled: b2,
            var_scaled: var,
            mcse_bias2: mb,
            mcse_var: mv,
            failures,
        });
    }

    Ok(MonteCarloTable {
        scenario: format!("table1_eps{}", cfg.eps),
        family: "equicorr".to_string(),
        n: cfg.n,
        eps: Some(cfg.eps),
        m_star: None,
        scale: 100.0,
        replications: cfg.replications,
        used_replications,
        seed: cfg.seed,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        cells,
    })
}

/// Heterogeneous-variance location study with x1000 scaling. The reference
/// estimator weights column means by inverse sample variances.
pub fn run_table2(cfg: &Table2Config) -> Result<MonteCarloTable> {
    let fam = ScenarioFamily::HeteroLocation {
        d: cfg.d,
        mu0: cfg.mu0,
        m_star: cfg.m_star,
        shift: cfg.shift,
    };
    crate::models::scenario::scenario_covariance(&fam)?;

    let per_rep: Vec<Option<Vec<f64>>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = CounterRng::substream(cfg.seed, rep);
            let data = sample_scenario(&fam, cfg.n, &mut rng).ok()?;
            let mut out = Vec::with_capacity(cfg.xi_grid.len() + 1);
            if cfg.include_mle {
                let nf = cfg.n as f64;
                let mut wsum = 0.0;
                let mut acc = 0.0;
                for j in 0..cfg.d {
                    let col = data.column(j);
                    let xbar = col.iter().sum::<f64>() / nf;
                    let s2 =
                        col.iter().map(|x| (x - xbar) * (x - xbar)).sum::<f64>() / (nf - 1.0);
                    if s2 <= 0.0 {
                        return None;
                    }
                    let w = 1.0 / s2;
                    wsum += w;
                    acc += w * xbar;
                }
                out.push(acc / wsum);
            }
            let mut start: Option<f64> = None;
            for &xi in &cfg.xi_grid {
                let fp = hetero_location_fixed_point(&data, xi, start, 500, 1e-10).ok()?;
                if !fp.converged {
                    return None;
                }
                start = Some(fp.mu);
                out.push(fp.mu);
            }
            Some(out)
        })
        .collect();

    let used_replications = used(&per_rep);
    let failures = cfg.replications - used_replications;
    let mut cells = Vec::new();
    let mut col = 0usize;
    if cfg.include_mle {
        let vals: Vec<f64> = per_rep.iter().flatten().map(|v| v[col]).collect();
        let (b2, var, mb, mv) = aggregate(&vals, cfg.mu0, 1000.0);
        cells.push(McCell {
            estimator: "mle".to_string(),
            xi: None,
            bias2_scaled: b2,
            var_scaled: var,
            mcse_bias2: mb,
            mcse_var: mv,
            failures,
        });
        col += 1;
    }
    for (i, &xi) in cfg.xi_grid.iter().enumerate() {
        let vals: Vec<f64> = per_rep.iter().flatten().map(|v| v[col + i]).collect();
        let (b2, var, mb, mv) = aggregate(&vals, cfg.mu0, 1000.0);
        cells.push(McCell {
            estimator: "dmcle".to_string(),
            xi: Some(xi),
            bias2_scaled: b2,
            var_scaled: var,
            mcse_bias2: mb,
            mcse_var: mv,
            failures,
        });
    }

    Ok(MonteCarloTable {
        scenario: format!("table2_n{}_mstar{}", cfg.n, cfg.m_star),
        family: "hetero-location".to_string(),
        n: cfg.n,
        eps: None,
        m_star: Some(cfg.m_star),
        scale: 1000.0,
        replications: cfg.replications,
        used_replications,
        seed: cfg.seed,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        cells,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxBiasConfig {
    pub m: usize,
    pub m_star_list: Vec<usize>,
    pub alpha1_list: Vec<f64>,
    pub h1: f64,
    pub c1: f64,
    pub c2: f64,
    pub delta_grid: Vec<f64>,
}

impl Default for MaxBiasConfig {
    fn default() -> Self {
        Self {
            m: 10,
            m_star_list: vec![0, 1, 2, 3, 4],
            alpha1_list: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            h1: 1.0,
            c1: 1.0,
            c2: 1.0,
            delta_grid: (0..=120).map(|i| i as f64 / 20.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxBiasRow {
    pub m: usize,
    pub m_star: usize,
    pub alpha1_star: f64,
    pub h1: f64,
    pub delta: f64,
    pub bound: f64,
}

/// Tabulates the worst-case bias bound over the delta grid for every
/// (m_star, alpha1_star) combination, for external plotting.
pub fn run_maxbias_curves(cfg: &MaxBiasConfig) -> Result<Vec<MaxBiasRow>> {
    let mut rows = Vec::new();
    for &m_star in &cfg.m_star_list {
        for &alpha1 in &cfg.alpha1_list {
            for &delta in &cfg.delta_grid {
                let bound =
                    max_bias_bound(delta, cfg.m, m_star, alpha1, cfg.c1, cfg.c2, cfg.h1)?;
                rows.push(MaxBiasRow {
                    m: cfg.m,
                    m_star,
                    alpha1_star: alpha1,
                    h1: cfg.h1,
                    delta,
                    bound,
                });
            }
        }
    }
    Ok(rows)
}

/// CSV for Monte Carlo tables: one row per scenario x estimator x xi cell.
/// Numbers use shortest round-trip formatting, so identical inputs yield
/// byte-identical files.
pub fn tables_to_csv(tables: &[MonteCarloTable]) -> String {
    let mut out = String::from(
        "scenario,family,n,eps,m_star,estimator,xi,bias2_scaled,var_scaled,mcse_bias2,mcse_var,failures\n",
    );
    for t in tables {
        for c in &t.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                t.scenario,
                t.family,
                t.n,
                t.eps.map(|e| e.to_string()).unwrap_or_default(),
                t.m_star.map(|m| m.to_string()).unwrap_or_default(),
                c.estimator,
                c.xi.map(|x| x.to_string()).unwrap_or_default(),
                c.bias2_scaled,
                c.var_scaled,
                c.mcse_bias2,
                c.mcse_var,
                c.failures
            ));
        }
    }
    out
}

pub fn maxbias_to_csv(rows: &[MaxBiasRow]) -> String {
    let mut out = String::from("m,m_star,alpha1_star,h1,delta,bound\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.m, r.m_star, r.alpha1_star, r.h1, r.delta, r.bound
        ));
    }
    out
}

pub fn write_string(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)?;
    Ok(())
}

/// JSON sidecar with the fully resolved config, seed, RNG algorithm and
/// wall time. Timestamps and durations live only here, never in the CSVs.
pub fn write_metadata_json(
    path: &Path,
    config: serde_json::Value,
    seed: u64,
    wall_time_secs: f64,
) -> Result<()> {
    let meta = serde_json::json!({
        "config": config,
        "seed": seed,
        "rng_algorithm": RNG_ALGORITHM,
        "wall_time_secs": wall_time_secs,
    });
    std::fs::write(path, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}
