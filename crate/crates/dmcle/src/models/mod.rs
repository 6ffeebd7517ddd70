//! Concrete sub-likelihood families and the samplers for their true
//! (possibly incompatible) data-generating processes.

pub mod equicorr;
pub mod gev;
pub mod hetero;
pub mod rng;
pub mod scenario;
pub mod smith;

pub use equicorr::{
    equicorr_full_mle, equicorr_pair_loglik, equicorr_pair_score, mean_pairwise_correlation,
    pairwise_design, EquiCorrPairUnit,
};
pub use gev::{fit_gev_lmoments, frechet_transform, sample_gev, FrechetTransformed, GevMargin};
pub use hetero::{
    grand_mean, hetero_design, hetero_location_fixed_point, FixedPointResult, HeteroLocationUnit,
};
pub use rng::{CounterRng, RNG_ALGORITHM};
pub use scenario::{sample_scenario, scenario_covariance, ScenarioFamily};
pub use smith::{
    log_chol_from_sigma, sample_smith_process, sigma_from_log_chol, smith_a, smith_design,
    smith_moment_start, smith_pair_cdf, smith_pair_density, smith_pair_log_density, SmithPairUnit,
};
