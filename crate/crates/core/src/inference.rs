//! Confidence intervals for a linear contrast `cᵀβ`.
//!
//! | method            | randomness            | needs `σ̂_c` |
//! |-------------------|-----------------------|-------------|
//! | Wald              | none                  | yes         |
//! | HulC              | batch count, split    | no          |
//! | batch t-statistic | split                 | no          |
//! | wild bootstrap    | multiplier weights    | no          |
//! | pairs bootstrap   | row resampling        | no          |
//!
//! Every random choice is drawn from an [`RngStream`]; bootstrap draw `b`
//! uses `rng.substream(b)` and the batch permutation uses its own
//! substream, so results do not depend on scheduling.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::debias::{bias_from_parts, moment_bias, DebiasResult};
use crate::error::{Error, Result};
use crate::estimation::{check_contrast, ols_fit, FitResult, Sample};
use crate::quantile::{normal_quantile, student_t_quantile};
use crate::rng::RngStream;
use crate::variance::{sandwich_with, SandwichOptions};

/// Substream index reserved for the HulC batch-count draw.
const BATCH_COUNT_STREAM: u64 = 0;
/// Substream index reserved for the batch permutation.
const PERMUTATION_STREAM: u64 = 1;

/// Retries of a pairs-bootstrap resample whose Gram matrix is singular.
const PAIRS_RETRIES: usize = 10;
/// Largest fraction of pairs-bootstrap draws that may be skipped.
const PAIRS_MAX_SKIP_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CiMethod {
    Wald,
    HulC,
    TStat,
    WildBootstrap,
    PairsBootstrap,
}

impl CiMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            CiMethod::Wald => "wald",
            CiMethod::HulC => "hulc",
            CiMethod::TStat => "tstat",
            CiMethod::WildBootstrap => "wild",
            CiMethod::PairsBootstrap => "pairs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    /// Nominal coverage `1 − α`.
    pub level: f64,
    pub method: CiMethod,
    pub point: f64,
}

impl ConfidenceInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    /// Shifted by `delta`; used by the equivariance tests.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            lower: self.lower + delta,
            upper: self.upper + delta,
            point: self.point + delta,
            ..*self
        }
    }
}

/// Which estimate a Wald interval is centered on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointEstimator {
    Ols,
    #[default]
    BiasCorrected,
}

/// Multiplier distribution of the wild bootstrap.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightLaw {
    /// Two-point law with `Eξ = 0`, `Eξ² = 1`, `Eξ³ = 1`.
    #[default]
    MammenTwoPoint,
    StandardNormal,
}

impl WeightLaw {
    /// `((low, P(low)), (high, P(high)))` for the two-point law.
    pub fn mammen_atoms() -> ((f64, f64), (f64, f64)) {
        let s5 = 5f64.sqrt();
        let low = -(s5 - 1.0) / 2.0;
        let high = (s5 + 1.0) / 2.0;
        let p_low = (s5 + 1.0) / (2.0 * s5);
        ((low, p_low), (high, 1.0 - p_low))
    }

    /// Closed-form `(Eξ, Eξ², Eξ³)`.
    pub fn moments(&self) -> (f64, f64, f64) {
        match self {
            WeightLaw::MammenTwoPoint => {
                let ((a, pa), (b, pb)) = Self::mammen_atoms();
                (
                    pa * a + pb * b,
                    pa * a * a + pb * b * b,
                    pa * a * a * a + pb * b * b * b,
                )
            }
            WeightLaw::StandardNormal => (0.0, 1.0, 0.0),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            WeightLaw::MammenTwoPoint => {
                let ((a, pa), (b, _)) = Self::mammen_atoms();
                if rng.random::<f64>() < pa {
                    a
                } else {
                    b
                }
            }
            WeightLaw::StandardNormal => rng.sample(StandardNormal),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub n_boot: usize,
    #[serde(default)]
    pub weight_law: WeightLaw,
    /// Recompute the bias estimate inside every bootstrap world.
    #[serde(default = "yes")]
    pub debias_in_boot: bool,
    /// Center bootstrap replicates at `cᵀβ̂_bc` instead of `cᵀβ̂`.
    #[serde(default)]
    pub center_boot_at_bc: bool,
}

fn yes() -> bool {
    true
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self {
            n_boot: 1000,
            weight_law: WeightLaw::MammenTwoPoint,
            debias_in_boot: true,
            center_boot_at_bc: false,
        }
    }
}

impl BootstrapSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_boot == 0 {
            return Err(Error::Domain("n_boot must be positive".into()));
        }
        if self.n_boot < 100 {
            log::warn!(
                "n_boot = {} is below 100; bootstrap quantiles will be coarse",
                self.n_boot
            );
        }
        Ok(())
    }
}

/// A bootstrap interval with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapInterval {
    pub interval: ConfidenceInterval,
    /// All replicates were identical; the interval is a single point.
    pub degenerate: bool,
    /// Draws dropped after repeated singular resamples (pairs only).
    pub skipped: usize,
}

/// OLS fit plus moment bias correction, shared by the full-sample methods.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub fit: FitResult,
    pub debias: DebiasResult,
}

impl FittedModel {
    pub fn new(sample: &Sample) -> Result<Self> {
        let fit = ols_fit(sample)?;
        let debias = moment_bias(sample, &fit);
        Ok(Self { fit, debias })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Smallest order statistic whose empirical CDF value reaches `p`:
/// `inf{t : F̂(t) ≥ p}`.
pub fn empirical_quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0, 1], got {p}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[order_index(sorted.len(), p)])
}

/// 0-based index `k − 1` of the smallest `k` with `k/B ≥ p`.
fn order_index(len: usize, p: f64) -> usize {
    let b = len as f64;
    let mut k = ((p * b).ceil() as usize).clamp(1, len);
    while k > 1 && (k - 1) as f64 / b >= p {
        k -= 1;
    }
    while k < len && (k as f64) / b < p {
        k += 1;
    }
    k - 1
}

/// Wald interval `cᵀβ̂_bc ± z_{1−α/2} σ̂_c/√n`.
pub fn wald_ci(sample: &Sample, c: &DVector<f64>, alpha: f64) -> Result<ConfidenceInterval> {
    let model = FittedModel::new(sample)?;
    wald_ci_from_model(
        sample,
        &model,
        c,
        alpha,
        PointEstimator::BiasCorrected,
        &SandwichOptions::default(),
    )
}

pub fn wald_ci_from_model(
    sample: &Sample,
    model: &FittedModel,
    c: &DVector<f64>,
    alpha: f64,
    estimator: PointEstimator,
    variance: &SandwichOptions,
) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    check_contrast(c, sample.d())?;
    let sigma = sandwich_with(sample, &model.fit, c, variance)?.sigma_hat();
    let point = match estimator {
        PointEstimator::Ols => c.dot(&model.fit.beta_hat),
        PointEstimator::BiasCorrected => c.dot(&model.debias.beta_bc),
    };
    let half = normal_quantile(1.0 - alpha / 2.0)? * sigma / (sample.n() as f64).sqrt();
    Ok(ConfidenceInterval {
        lower: point - half,
        upper: point + half,
        level: 1.0 - alpha,
        method: CiMethod::Wald,
        point,
    })
}

/// `(B, τ)` with `B = ⌈log₂(2/α)⌉` and `τ = 2^{B−1}α − 1 ∈ [0, 1)`.
pub fn hulc_batch_count(alpha: f64) -> Result<(usize, f64)> {
    check_alpha(alpha)?;
    let mut b = (2.0 / alpha).log2().ceil() as i32;
    // Guard against log2 rounding at exact powers of two.
    while 2f64.powi(b - 1) * alpha < 1.0 {
        b += 1;
    }
    while 2f64.powi(b - 1) * alpha >= 2.0 {
        b -= 1;
    }
    let tau = 2f64.powi(b - 1) * alpha - 1.0;
    Ok((b as usize, tau))
}

/// Randomized batch count `B*`: `B − 1` with probability `τ`, else `B`.
pub fn hulc_draw_batches(alpha: f64, rng: &RngStream) -> Result<usize> {
    let (b, tau) = hulc_batch_count(alpha)?;
    let u: f64 = rng.substream(BATCH_COUNT_STREAM).generator().random();
    Ok(if u <= tau { b - 1 } else { b })
}

/// Seeded uniform permutation of `0..n` cut into `batches` contiguous
/// blocks; the first `n mod batches` blocks take one extra row.
pub fn split_batches(n: usize, batches: usize, rng: &RngStream) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng.substream(PERMUTATION_STREAM).generator());
    let base = n / batches;
    let extra = n % batches;
    let mut out = Vec::with_capacity(batches);
    let mut start = 0;
    for b in 0..batches {
        let len = base + usize::from(b < extra);
        out.push(perm[start..start + len].to_vec());
        start += len;
    }
    out
}

/// `cᵀβ̂_bc` on each batch of a seeded split.
pub fn batch_estimates(sample: &Sample, c: &DVector<f64>, batches: usize, rng: &RngStream) -> Result<Vec<f64>> {
    check_contrast(c, sample.d())?;
    let (n, d) = (sample.n(), sample.d());
    if batches == 0 || n / batches <= d {
        return Err(Error::BatchTooSmall { batches, n, d });
    }
    split_batches(n, batches, rng)
        .par_iter()
        .map(|rows| {
            let part = sample.select_rows(rows);
            let fit = ols_fit(&part)?;
            Ok(c.dot(&moment_bias(&part, &fit).beta_bc))
        })
        .collect()
}

/// `[min, max]` of batch estimates. The point is their mean.
pub fn hulc_from_estimates(estimates: &[f64], alpha: f64) -> Result<ConfidenceInterval> {
    if estimates.is_empty() {
        return Err(Error::EmptyInput);
    }
    let lower = estimates.iter().copied().fold(f64::INFINITY, f64::min);
    let upper = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ConfidenceInterval {
        lower,
        upper,
        level: 1.0 - alpha,
        method: CiMethod::HulC,
        point: estimates.iter().sum::<f64>() / estimates.len() as f64,
    })
}

/// Convex hull of bias-corrected estimates over `B*` disjoint batches.
pub fn hulc_ci(sample: &Sample, c: &DVector<f64>, alpha: f64, rng: &RngStream) -> Result<ConfidenceInterval> {
    let batches = hulc_draw_batches(alpha, rng)?;
    let est = batch_estimates(sample, c, batches, rng)?;
    hulc_from_estimates(&est, alpha)
}

/// `m ± t_{1−α/2, B−1} s/√B` from batch estimates.
pub fn tstat_from_estimates(estimates: &[f64], alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    let b = estimates.len();
    if b < 2 {
        return Err(Error::Domain(format!(
            "t-statistic interval needs at least 2 batches, got {b}"
        )));
    }
    let bf = b as f64;
    let mean = estimates.iter().sum::<f64>() / bf;
    let s2 = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (bf - 1.0);
    let half = student_t_quantile(1.0 - alpha / 2.0, (b - 1) as u32)? * s2.sqrt() / bf.sqrt();
    Ok(ConfidenceInterval {
        lower: mean - half,
        upper: mean + half,
        level: 1.0 - alpha,
        method: CiMethod::TStat,
        point: mean,
    })
}

/// Batch t-statistic interval with a fixed number of batches.
pub fn tstat_ci(
    sample: &Sample,
    c: &DVector<f64>,
    alpha: f64,
    n_batches: usize,
    rng: &RngStream,
) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    if n_batches < 2 {
        return Err(Error::Domain(format!("n_batches must be at least 2, got {n_batches}")));
    }
    let est = batch_estimates(sample, c, n_batches, rng)?;
    tstat_from_estimates(&est, alpha)
}

/// Basic bootstrap interval `[θ̂ − q̂_{1−α/2}, θ̂ − q̂_{α/2}]`.
fn pivot_interval(center: f64, replicates: &[f64], alpha: f64, method: CiMethod) -> Result<(ConfidenceInterval, bool)> {
    let hi = empirical_quantile(replicates, 1.0 - alpha / 2.0)?;
    let lo = empirical_quantile(replicates, alpha / 2.0)?;
    let first = replicates[0];
    let tol = 1e-12 * (1.0 + center.abs());
    let degenerate = replicates.iter().all(|&t| (t - first).abs() <= tol);
    Ok((
        ConfidenceInterval {
            lower: center - hi,
            upper: center - lo,
            level: 1.0 - alpha,
            method,
            point: center,
        },
        degenerate,
    ))
}

pub fn wild_bootstrap_ci(
    sample: &Sample,
    c: &DVector<f64>,
    alpha: f64,
    spec: &BootstrapSpec,
    rng: &RngStream,
) -> Result<BootstrapInterval> {
    let model = FittedModel::new(sample)?;
    wild_bootstrap_ci_from_model(sample, &model, c, alpha, spec, rng)
}

/// Wild bootstrap with `Y*_i = X_iᵀβ̂ + ε̂_i ξ_i`. The design is fixed, so
/// the Gram factor and leverages of the original fit are reused in every
/// bootstrap world; each draw costs `O(nd)`.
pub fn wild_bootstrap_ci_from_model(
    sample: &Sample,
    model: &FittedModel,
    c: &DVector<f64>,
    alpha: f64,
    spec: &BootstrapSpec,
    rng: &RngStream,
) -> Result<BootstrapInterval> {
    check_alpha(alpha)?;
    check_contrast(c, sample.d())?;
    spec.validate()?;
    let fit = &model.fit;
    let x = sample.x();
    let n = sample.n() as f64;
    let estimate = c.dot(&fit.beta_hat);
    let estimate_bc = c.dot(&model.debias.beta_bc);
    let center = if spec.center_boot_at_bc { estimate_bc } else { estimate };

    let replicates: Vec<f64> = (0..spec.n_boot)
        .into_par_iter()
        .map(|b| {
            let mut g = rng.substream(b as u64).generator();
            let u = DVector::from_iterator(
                sample.n(),
                fit.residuals.iter().map(|e| e * spec.weight_law.draw(&mut g)),
            );
            // β̂* − β̂ = Σ̂⁻¹ n⁻¹ Σ X_i ε̂_i ξ_i
            let shift = fit.gram.solve(&(x.tr_mul(&u) / n));
            let mut boot = estimate + c.dot(&shift);
            if spec.debias_in_boot {
                let resid = u - x * &shift;
                let bias = bias_from_parts(x, &fit.gram, &resid, &fit.leverage_norms);
                boot -= c.dot(&bias);
            }
            boot - center
        })
        .collect();

    let (interval, degenerate) = pivot_interval(estimate_bc, &replicates, alpha, CiMethod::WildBootstrap)?;
    if degenerate {
        log::debug!("wild bootstrap replicates are all identical");
    }
    Ok(BootstrapInterval {
        interval,
        degenerate,
        skipped: 0,
    })
}

/// `cᵀβ̂*_bc` on the resample made of `rows`.
/// Splits per-draw outcomes into replicates and a skip count, failing when
/// more than 10% of draws were skipped.
pub(crate) fn collect_pairs_draws(draws: Vec<Result<Option<f64>>>) -> Result<(Vec<f64>, usize)> {
    let total = draws.len();
    let mut replicates = Vec::with_capacity(total);
    let mut skipped = 0;
    for d in draws {
        match d? {
            Some(t) => replicates.push(t),
            None => skipped += 1,
        }
    }
    if replicates.is_empty() || skipped as f64 > PAIRS_MAX_SKIP_FRACTION * total as f64 {
        return Err(Error::BootstrapDegenerate(format!(
            "{skipped} of {total} pairs-bootstrap draws had a singular Gram matrix"
        )));
    }
    Ok((replicates, skipped))
}

pub(crate) fn pairs_replicate(sample: &Sample, rows: &[usize], c: &DVector<f64>, debias: bool) -> Result<f64> {
    let part = sample.select_rows(rows);
    let fit = ols_fit(&part)?;
    Ok(if debias {
        c.dot(&moment_bias(&part, &fit).beta_bc)
    } else {
        c.dot(&fit.beta_hat)
    })
}

pub fn pairs_bootstrap_ci(
    sample: &Sample,
    c: &DVector<f64>,
    alpha: f64,
    spec: &BootstrapSpec,
    rng: &RngStream,
) -> Result<BootstrapInterval> {
    let model = FittedModel::new(sample)?;
    pairs_bootstrap_ci_from_model(sample, &model, c, alpha, spec, rng)
}

/// Pairs (row-resampling) bootstrap: each draw refits on `n` rows sampled
/// with replacement. A singular resample is redrawn up to ten times before
/// the draw is skipped; more than 10% skipped draws is an error.
pub fn pairs_bootstrap_ci_from_model(
    sample: &Sample,
    model: &FittedModel,
    c: &DVector<f64>,
    alpha: f64,
    spec: &BootstrapSpec,
    rng: &RngStream,
) -> Result<BootstrapInterval> {
    check_alpha(alpha)?;
    check_contrast(c, sample.d())?;
    spec.validate()?;
    let n = sample.n();
    let estimate = c.dot(&model.fit.beta_hat);
    let estimate_bc = c.dot(&model.debias.beta_bc);
    let center = if spec.center_boot_at_bc { estimate_bc } else { estimate };

    let draws: Vec<Result<Option<f64>>> = (0..spec.n_boot)
        .into_par_iter()
        .map(|b| {
            let mut g = rng.substream(b as u64).generator();
            for _ in 0..=PAIRS_RETRIES {
                let rows: Vec<usize> = (0..n).map(|_| g.random_range(0..n)).collect();
                match pairs_replicate(sample, &rows, c, spec.debias_in_boot) {
                    Ok(v) => return Ok(Some(v - center)),
                    Err(Error::SingularGram { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Ok(None)
        })
        .collect();

    let (replicates, skipped) = collect_pairs_draws(draws)?;
    let (interval, degenerate) = pivot_interval(estimate_bc, &replicates, alpha, CiMethod::PairsBootstrap)?;
    Ok(BootstrapInterval {
        interval,
        degenerate,
        skipped,
    })
}
