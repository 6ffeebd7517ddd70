//! Discriminative maximum composite likelihood estimation (D-McLE).
//!
//! A composite likelihood stitches together low-dimensional sub-likelihoods
//! (margins, pairs) with importance weights. This crate estimates the
//! parameter and the weights *simultaneously*: the weights maximize the
//! weighted composite log-likelihood subject to sitting at a fixed
//! Kullback-Leibler distance `xi` from uniform, which exponentially tilts
//! weight away from sub-models that disagree with the bulk of the data.
//!
//! Crate layout:
//! - [`weights`]: KL divergence, exponential tilting, the `xi -> alpha1` solver
//! - [`design`]: the sub-likelihood unit trait and weighted aggregates
//! - [`estimator`]: the alternating fit, xi selection, compatibility profiles
//! - [`variance`]: sandwich variance (plug-in / jackknife) and CLIC
//! - [`models`]: equicorrelated-normal pairs, heterogeneous-variance
//!   location, Smith max-stable pairs, GEV/Frechet margins, scenario samplers
//! - [`simharness`]: seeded Monte Carlo studies with CSV/JSON emission

pub mod data;
pub mod design;
pub mod error;
pub mod estimator;
pub mod maxbias;
pub mod models;
pub mod simharness;
pub mod solve;
pub mod variance;
pub mod weights;

pub use data::{ObsMatrix, StationCoords};
pub use design::{CompositeDesign, SubLikelihoodModel};
pub use error::{Error, Result};
pub use estimator::{cpp_profile, fit_dmcle, select_xi, CppProfile, FitOptions, FitResult, XiSelectionResult};
pub use maxbias::max_bias_bound;
pub use variance::{clic, sandwich_variance, SandwichVariance, VarianceMethod};
pub use weights::{kl_divergence, solve_alpha1, tilt_weights, SubLikValues, TiltSolution, WeightVector};
