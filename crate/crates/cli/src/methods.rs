//! One entry point for every interval the CLI can build.

use leanreg_core::inference::{
    hulc_ci, pairs_bootstrap_ci_from_model, tstat_ci, wald_ci_from_model, wild_bootstrap_ci_from_model, FittedModel,
};
use leanreg_core::variance::SandwichOptions;
use leanreg_core::{BootstrapSpec, ConfidenceInterval, PointEstimator, RngStream, Sample, WeightLaw};
use nalgebra::DVector;

use crate::config::Method;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodOptions {
    pub alpha: f64,
    pub n_boot: usize,
    pub tstat_batches: usize,
    pub weight_law: WeightLaw,
}

impl MethodOptions {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            n_boot: 1000,
            tstat_batches: 6,
            weight_law: WeightLaw::MammenTwoPoint,
        }
    }

    fn bootstrap(&self) -> BootstrapSpec {
        BootstrapSpec {
            n_boot: self.n_boot,
            weight_law: self.weight_law,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalOutcome {
    pub interval: ConfidenceInterval,
    /// Pairs-bootstrap draws dropped after exhausting retries.
    pub skipped_draws: usize,
}

/// `model` must be the fit of `sample`; HulC and the t-statistic interval
/// refit on their own batches and ignore it.
pub fn build_interval(
    method: Method,
    sample: &Sample,
    model: &FittedModel,
    c: &DVector<f64>,
    opts: &MethodOptions,
    rng: &RngStream,
) -> leanreg_core::Result<IntervalOutcome> {
    let plain = |interval| IntervalOutcome {
        interval,
        skipped_draws: 0,
    };
    let sandwich = SandwichOptions::default();
    Ok(match method {
        Method::Wald => plain(wald_ci_from_model(
            sample,
            model,
            c,
            opts.alpha,
            PointEstimator::BiasCorrected,
            &sandwich,
        )?),
        Method::WaldOls => plain(wald_ci_from_model(
            sample,
            model,
            c,
            opts.alpha,
            PointEstimator::Ols,
            &sandwich,
        )?),
        Method::Hulc => plain(hulc_ci(sample, c, opts.alpha, rng)?),
        Method::Tstat => plain(tstat_ci(sample, c, opts.alpha, opts.tstat_batches, rng)?),
        Method::Wild => {
            let out = wild_bootstrap_ci_from_model(sample, model, c, opts.alpha, &opts.bootstrap(), rng)?;
            plain(out.interval)
        }
        Method::Pairs => {
            let out = pairs_bootstrap_ci_from_model(sample, model, c, opts.alpha, &opts.bootstrap(), rng)?;
            IntervalOutcome {
                interval: out.interval,
                skipped_draws: out.skipped,
            }
        }
    })
}
