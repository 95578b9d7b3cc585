//! Assumption-lean linear regression.
//!
//! Ordinary least squares for the projection parameter, a method-of-moments
//! correction for the `d/√n` bias that appears when the linear model is
//! misspecified, sandwich variance estimation for linear contrasts, and five
//! confidence-interval constructions (Wald, HulC, batch t-statistic, wild
//! bootstrap and pairs bootstrap). The [`dgp`] and [`diagnostics`] modules
//! provide synthetic designs with known ground truth and Monte Carlo probes
//! of the quantities that drive the theory.

pub mod debias;
pub mod dgp;
pub mod diagnostics;
pub mod eigen;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod quantile;
pub mod rng;
pub mod variance;

pub use debias::{jackknife_debias, moment_bias, true_bias_oracle, DebiasMethod, DebiasResult};
pub use dgp::{ground_truth, population_kappa_mc, DgpKind, DgpSpec, GroundTruth, KappaEstimate, Theta};
pub use error::{Error, Result};
pub use estimation::{gram, loo_fits, ols_fit, FitResult, GramFactor, Sample};
pub use inference::{
    empirical_quantile, hulc_ci, pairs_bootstrap_ci, tstat_ci, wald_ci, wild_bootstrap_ci, BootstrapInterval,
    BootstrapSpec, CiMethod, ConfidenceInterval, PointEstimator, WeightLaw,
};
pub use quantile::{normal_cdf, normal_quantile, student_t_cdf, student_t_quantile};
pub use rng::RngStream;
pub use variance::{sandwich, ContrastVariance, ResidualSource};
