//! Interval for a contrast on a user-supplied data set.

use std::path::PathBuf;

use leanreg_core::inference::FittedModel;
use leanreg_core::rng::stable_hash;
use leanreg_core::{sandwich, ResidualSource, RngStream, WeightLaw};

use crate::config::Method;
use crate::data::{parse_contrast, parse_data_csv};
use crate::error::Result;
use crate::methods::{build_interval, MethodOptions};

pub const FIT_HEADER: &str = "method,alpha,n,d,estimate,estimate_bc,sigma_hat,lower,upper,width";

#[derive(Debug, Clone, PartialEq)]
pub struct FitArgs {
    pub data: PathBuf,
    pub contrast: String,
    pub method: Method,
    pub alpha: f64,
    pub seed: u64,
    pub n_boot: usize,
    pub tstat_batches: usize,
    pub weight_law: WeightLaw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub method: Method,
    pub alpha: f64,
    pub n: usize,
    pub d: usize,
    pub estimate: f64,
    pub estimate_bc: f64,
    pub sigma_hat: f64,
    pub lower: f64,
    pub upper: f64,
}

impl FitReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.alpha,
            self.n,
            self.d,
            self.estimate,
            self.estimate_bc,
            self.sigma_hat,
            self.lower,
            self.upper,
            self.upper - self.lower
        )
    }
}

pub fn cmd_fit(args: &FitArgs) -> Result<FitReport> {
    let sample = parse_data_csv(&args.data)?;
    let c = parse_contrast(&args.contrast, sample.d())?;
    let model = FittedModel::new(&sample)?;
    let sigma_hat = sandwich(&sample, &model.fit, &c, ResidualSource::OlsResiduals)?.sigma_hat();
    let opts = MethodOptions {
        alpha: args.alpha,
        n_boot: args.n_boot,
        tstat_batches: args.tstat_batches,
        weight_law: args.weight_law,
    };
    let rng = RngStream::new(args.seed, stable_hash(args.method.as_str().as_bytes()));
    let out = build_interval(args.method, &sample, &model, &c, &opts, &rng)?;
    Ok(FitReport {
        method: args.method,
        alpha: args.alpha,
        n: sample.n(),
        d: sample.d(),
        estimate: c.dot(&model.fit.beta_hat),
        estimate_bc: c.dot(&model.debias.beta_bc),
        sigma_hat,
        lower: out.interval.lower,
        upper: out.interval.upper,
    })
}
