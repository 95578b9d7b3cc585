//! Bias estimation for least squares under misspecification.
//!
//! When `E[Y|X]` is not linear the OLS estimator carries a bias of order
//! `d/√n`. The moment estimator
//!
//! ```text
//! B̂ = −n⁻² Σ_i Σ̂⁻¹ X_i (Y_i − X_iᵀβ̂) ‖X_i‖²_{Σ̂⁻¹}
//! ```
//!
//! removes it at `O(nd²)` cost using the Cholesky factor and leverages that
//! `ols_fit` already computed. A delete-one jackknife is provided as a
//! comparator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dgp::DgpSpec;
use crate::error::{Error, Result};
use crate::estimation::{loo_fits, FitResult, GramFactor, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DebiasMethod {
    MomentBias,
    Jackknife,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DebiasResult {
    pub bias_hat: DVector<f64>,
    /// `β̂ − bias_hat`.
    pub beta_bc: DVector<f64>,
    pub method: DebiasMethod,
}

impl DebiasResult {
    /// No correction: `β̂_bc = β̂`.
    pub fn none(fit: &FitResult) -> Self {
        Self {
            bias_hat: DVector::zeros(fit.d()),
            beta_bc: fit.beta_hat.clone(),
            method: DebiasMethod::None,
        }
    }
}

/// `−n⁻² Σ̂⁻¹ Σ_i X_i r_i w_i` for arbitrary residuals `r` and weights `w`.
pub(crate) fn bias_from_parts(
    x: &DMatrix<f64>,
    gram: &GramFactor,
    residuals: &DVector<f64>,
    leverage_norms: &DVector<f64>,
) -> DVector<f64> {
    let n = x.nrows() as f64;
    let weighted = residuals.component_mul(leverage_norms);
    gram.solve(&x.tr_mul(&weighted)) * (-1.0 / (n * n))
}

/// Method-of-moments bias estimate and `β̂_bc = β̂ − B̂`.
pub fn moment_bias(sample: &Sample, fit: &FitResult) -> DebiasResult {
    let bias_hat = bias_from_parts(sample.x(), &fit.gram, &fit.residuals, &fit.leverage_norms);
    let beta_bc = &fit.beta_hat - &bias_hat;
    DebiasResult {
        bias_hat,
        beta_bc,
        method: DebiasMethod::MomentBias,
    }
}

/// Delete-one jackknife: `β̂_jk = nβ̂ − ((n−1)/n) Σ_i β̂₍₋ᵢ₎`, with the
/// leave-one-out fits obtained by rank-one downdates.
pub fn jackknife_debias(sample: &Sample, fit: &FitResult) -> Result<DebiasResult> {
    let n = sample.n() as f64;
    let loo = loo_fits(sample, fit)?;
    let mut sum = DVector::zeros(fit.d());
    for b in &loo {
        sum += b;
    }
    let beta_jk = &fit.beta_hat * n - sum * ((n - 1.0) / n);
    Ok(DebiasResult {
        bias_hat: &fit.beta_hat - &beta_jk,
        beta_bc: beta_jk,
        method: DebiasMethod::Jackknife,
    })
}

/// Population bias term `B = −n⁻² Σ_i Σ⁻¹X_i(Y_i − X_iᵀβ)‖X_i‖²_{Σ⁻¹}`
/// for a known SPD `Σ` and projection parameter `β`.
pub fn population_bias(sigma: &DMatrix<f64>, sample: &Sample, beta: &DVector<f64>) -> Result<DVector<f64>> {
    let d = sample.d();
    if sigma.nrows() != d || sigma.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: sigma.nrows(),
        });
    }
    if beta.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: beta.len(),
        });
    }
    let factor = GramFactor::factor(sigma.clone())?;
    let errors = sample.y() - sample.x() * beta;
    let norms = DVector::from_iterator(sample.n(), (0..sample.n()).map(|i| factor.inv_norm_sq(&sample.row(i))));
    Ok(bias_from_parts(sample.x(), &factor, &errors, &norms))
}

/// The bias term at the population parameters of a synthetic design.
/// Diagnostic only: it needs `Σ` and `β`, which real data never provides.
pub fn true_bias_oracle(dgp: &DgpSpec, sample: &Sample, beta_star: &DVector<f64>) -> Result<DVector<f64>> {
    let sigma = dgp.population_covariance().ok_or(Error::UnknownPopulation)?;
    population_bias(&sigma, sample, beta_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::ols_fit;
    use crate::estimation::tests::{random_sample, svd_refit};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Eq.-by-eq. double loop with an explicit inverse, no Cholesky reuse.
    fn naive_bias(sample: &Sample) -> DVector<f64> {
        let (n, d) = (sample.n(), sample.d());
        let x = sample.x();
        let sigma = x.tr_mul(x) / n as f64;
        let inv = sigma.clone().try_inverse().unwrap();
        let beta = &inv * (x.tr_mul(sample.y()) / n as f64);
        let mut out = DVector::zeros(d);
        for i in 0..n {
            let xi = sample.row(i);
            let r = sample.y()[i] - xi.dot(&beta);
            let mut lev = 0.0;
            for j in 0..d {
                for k in 0..d {
                    lev += xi[j] * inv[(j, k)] * xi[k];
                }
            }
            out += &inv * &xi * (r * lev);
        }
        out * (-1.0 / (n * n) as f64)
    }

    #[test]
    fn two_point_example() {
        let s = Sample::from_rows(&[vec![1.0], vec![2.0]], &[1.0, 0.0]).unwrap();
        let f = ols_fit(&s).unwrap();
        let b = moment_bias(&s, &f);
        assert_relative_eq!(b.bias_hat[0], 0.096, epsilon = 1e-15);
        assert_relative_eq!(b.beta_bc[0], 0.104, epsilon = 1e-15);
        assert_eq!(b.beta_bc, &f.beta_hat - &b.bias_hat);
    }

    #[test]
    fn perfect_fit_has_zero_bias() {
        let s = random_sample(30, 3, 8);
        let s = s.with_response(s.x() * DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        let f = ols_fit(&s).unwrap();
        assert!(moment_bias(&s, &f).bias_hat.amax() < 1e-12);
        let jk = jackknife_debias(&s, &f).unwrap();
        assert!(jk.bias_hat.amax() < 1e-10);
        assert!((jk.beta_bc - &f.beta_hat).amax() < 1e-10);
    }

    #[test]
    fn none_is_zero() {
        let s = random_sample(10, 2, 1);
        let f = ols_fit(&s).unwrap();
        let r = DebiasResult::none(&f);
        assert_eq!(r.bias_hat, DVector::zeros(2));
        assert_eq!(r.beta_bc, f.beta_hat);
    }

    #[test]
    fn fast_path_matches_double_loop() {
        for seed in 0..20u64 {
            let n = 20 + (seed as usize * 7) % 80;
            let d = 1 + seed as usize % 8;
            let s = random_sample(n, d, 100 + seed);
            let f = ols_fit(&s).unwrap();
            let fast = moment_bias(&s, &f).bias_hat;
            let slow = naive_bias(&s);
            assert!((&fast - &slow).norm() <= 1e-10 * slow.norm(), "seed {seed}");
        }
    }

    #[test]
    fn jackknife_of_mean_is_mean() {
        let s = Sample::from_rows(&[vec![1.0], vec![1.0], vec![1.0]], &[0.0, 3.0, 3.0]).unwrap();
        let f = ols_fit(&s).unwrap();
        let jk = jackknife_debias(&s, &f).unwrap();
        assert_relative_eq!(jk.beta_bc[0], 2.0, epsilon = 1e-13);
        assert!(jk.bias_hat[0].abs() < 1e-13);
    }

    #[test]
    fn jackknife_matches_refit() {
        let s = random_sample(30, 4, 77);
        let f = ols_fit(&s).unwrap();
        let jk = jackknife_debias(&s, &f).unwrap();
        let n = s.n() as f64;
        let mut sum = DVector::zeros(4);
        for i in 0..s.n() {
            let rows: Vec<usize> = (0..s.n()).filter(|&k| k != i).collect();
            sum += svd_refit(&s.select_rows(&rows));
        }
        let oracle = &f.beta_hat * n - sum * ((n - 1.0) / n);
        assert!((&jk.beta_bc - &oracle).norm() <= 1e-8 * oracle.norm());
    }

    #[test]
    fn population_bias_scalar() {
        // Σ = 1, X = 2, Y − Xβ = 3: B = −2·3·4 = −24.
        let s = Sample::from_rows(&[vec![2.0]], &[5.0]).unwrap();
        let b = population_bias(&DMatrix::identity(1, 1), &s, &DVector::from_vec(vec![1.0])).unwrap();
        assert_relative_eq!(b[0], -24.0, epsilon = 1e-12);
    }

    #[test]
    fn population_bias_zero_at_exact_fit() {
        let s = random_sample(12, 3, 2);
        let beta = DVector::from_vec(vec![0.5, 0.0, -1.0]);
        let s = s.with_response(s.x() * &beta).unwrap();
        let b = population_bias(&DMatrix::identity(3, 3), &s, &beta).unwrap();
        assert!(b.amax() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn equivariance(seed in 0u64..1000, a in 0.1f64..5.0, diag in proptest::collection::vec(0.5f64..2.0, 3)) {
            let s = random_sample(40, 3, seed);
            let f = ols_fit(&s).unwrap();
            let b = moment_bias(&s, &f).bias_hat;

            // X → XA with A upper triangular, well conditioned.
            let mut amat = DMatrix::from_diagonal(&DVector::from_vec(diag));
            amat[(0, 1)] = 0.3;
            amat[(1, 2)] = -0.7;
            let sx = s.with_design(s.x() * &amat).unwrap();
            let fx = ols_fit(&sx).unwrap();
            let bx = moment_bias(&sx, &fx).bias_hat;
            let expected = amat.clone().try_inverse().unwrap() * &b;
            prop_assert!((&bx - &expected).norm() <= 1e-8 * expected.norm().max(1e-12));
            for i in 0..s.n() {
                prop_assert!((fx.leverage_norms[i] - f.leverage_norms[i]).abs() <= 1e-8 * f.leverage_norms[i].max(1e-12));
            }
            prop_assert!((&amat * &fx.beta_hat - &f.beta_hat).norm() <= 1e-8 * f.beta_hat.norm());

            // Y → aY.
            let sy = s.with_response(s.y() * a).unwrap();
            let fy = ols_fit(&sy).unwrap();
            let by = moment_bias(&sy, &fy).bias_hat;
            prop_assert!((&by - &b * a).norm() <= 1e-10 * (b.norm() * a));
            prop_assert!((&fy.beta_hat - &f.beta_hat * a).norm() <= 1e-12 * f.beta_hat.norm() * a);
            prop_assert!((&fy.residuals - &f.residuals * a).norm() <= 1e-12 * f.residuals.norm() * a);
        }
    }
}
