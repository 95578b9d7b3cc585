//! Sandwich variance for a linear contrast.
//!
//! `σ̂_c² = cᵀΣ̂⁻¹V̂Σ̂⁻¹c` with `V̂ = n⁻¹Σ X_iX_iᵀ r_i²`. The contraction
//! `w = Σ̂⁻¹c`, `σ̂_c² = n⁻¹Σ (wᵀX_i)² r_i²` needs `O(nd)` work after the
//! factorization; `V̂` itself is only formed on request.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::debias::moment_bias;
use crate::error::Result;
use crate::estimation::{check_contrast, FitResult, Sample};

/// Which coefficient vector the residuals in `V̂` are taken from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResidualSource {
    #[default]
    OlsResiduals,
    BcResiduals,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SandwichOptions {
    pub residual_source: ResidualSource,
    /// Scale by `n/(n−d)`. Off by default; the plain plug-in is unscaled.
    pub dof_correction: bool,
    /// Keep the materialized `V̂` in the result.
    pub keep_meat: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastVariance {
    pub sigma2_hat: f64,
    pub contrast: DVector<f64>,
    pub meat: Option<DMatrix<f64>>,
}

impl ContrastVariance {
    pub fn sigma_hat(&self) -> f64 {
        self.sigma2_hat.sqrt()
    }
}

pub fn sandwich(
    sample: &Sample,
    fit: &FitResult,
    c: &DVector<f64>,
    residual_source: ResidualSource,
) -> Result<ContrastVariance> {
    sandwich_with(
        sample,
        fit,
        c,
        &SandwichOptions {
            residual_source,
            ..Default::default()
        },
    )
}

pub fn sandwich_with(
    sample: &Sample,
    fit: &FitResult,
    c: &DVector<f64>,
    opts: &SandwichOptions,
) -> Result<ContrastVariance> {
    check_contrast(c, sample.d())?;
    let n = sample.n() as f64;
    let bc_residuals;
    let residuals = match opts.residual_source {
        ResidualSource::OlsResiduals => &fit.residuals,
        ResidualSource::BcResiduals => {
            let bc = moment_bias(sample, fit);
            bc_residuals = sample.y() - sample.x() * &bc.beta_bc;
            &bc_residuals
        }
    };
    let w = fit.gram.solve(c);
    let scores = sample.x() * &w;
    let mut sigma2_hat = scores
        .iter()
        .zip(residuals.iter())
        .map(|(s, r)| (s * r) * (s * r))
        .sum::<f64>()
        / n;
    if opts.dof_correction && sample.n() > sample.d() {
        sigma2_hat *= n / (n - sample.d() as f64);
    }
    let meat = opts.keep_meat.then(|| meat_matrix(sample.x(), residuals));
    Ok(ContrastVariance {
        sigma2_hat,
        contrast: c.clone(),
        meat,
    })
}

/// `V̂ = n⁻¹ Σ X_iX_iᵀ r_i²`.
pub fn meat_matrix(x: &DMatrix<f64>, residuals: &DVector<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut scaled = x.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= residuals[i].abs();
    }
    let mut v = scaled.tr_mul(&scaled);
    v /= n as f64;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::estimation::ols_fit;
    use crate::estimation::tests::random_sample;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_example() {
        let s = Sample::from_rows(&[vec![1.0], vec![1.0]], &[0.0, 2.0]).unwrap();
        let f = ols_fit(&s).unwrap();
        let v = sandwich(&s, &f, &DVector::from_vec(vec![1.0]), ResidualSource::OlsResiduals).unwrap();
        assert_relative_eq!(v.sigma2_hat, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn perfect_fit_is_zero() {
        let s = random_sample(20, 2, 4);
        let s = s.with_response(s.x() * DVector::from_vec(vec![1.0, -1.0])).unwrap();
        let f = ols_fit(&s).unwrap();
        let v = sandwich(&s, &f, &DVector::from_vec(vec![1.0, 0.0]), ResidualSource::OlsResiduals).unwrap();
        assert!(v.sigma2_hat < 1e-24);
    }

    #[test]
    fn zero_contrast_rejected() {
        let s = random_sample(20, 2, 4);
        let f = ols_fit(&s).unwrap();
        assert_eq!(
            sandwich(&s, &f, &DVector::zeros(2), ResidualSource::OlsResiduals),
            Err(Error::ZeroContrast)
        );
        assert!(matches!(
            sandwich(&s, &f, &DVector::zeros(3), ResidualSource::OlsResiduals),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn homogeneous_of_degree_two() {
        let s = random_sample(50, 4, 6);
        let f = ols_fit(&s).unwrap();
        let c = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.5]);
        let v1 = sandwich(&s, &f, &c, ResidualSource::OlsResiduals).unwrap();
        let v2 = sandwich(&s, &f, &(&c * 2.0), ResidualSource::OlsResiduals).unwrap();
        assert!((v2.sigma2_hat - 4.0 * v1.sigma2_hat).abs() <= 1e-12 * v2.sigma2_hat);
        let v3 = sandwich(&s, &f, &(&c * -3.0), ResidualSource::OlsResiduals).unwrap();
        assert!((v3.sigma_hat() / 3.0 - v1.sigma_hat()).abs() <= 1e-12 * v1.sigma_hat());
    }

    #[test]
    fn contraction_matches_materialized_meat() {
        for seed in 0..20u64 {
            let s = random_sample(30 + seed as usize * 3, 1 + seed as usize % 6, 500 + seed);
            let f = ols_fit(&s).unwrap();
            let c = DVector::from_fn(s.d(), |i, _| 1.0 + i as f64 * 0.5 - (seed % 3) as f64);
            let c = if c.norm() == 0.0 {
                DVector::from_element(s.d(), 1.0)
            } else {
                c
            };
            let opts = SandwichOptions {
                keep_meat: true,
                ..Default::default()
            };
            let v = sandwich_with(&s, &f, &c, &opts).unwrap();
            let inv = f.gram.sigma_hat.clone().try_inverse().unwrap();
            let explicit = (c.transpose() * &inv * v.meat.as_ref().unwrap() * &inv * &c)[(0, 0)];
            assert!((v.sigma2_hat - explicit).abs() <= 1e-10 * explicit, "seed {seed}");
        }
    }

    #[test]
    fn dof_and_bc_residual_options() {
        let s = random_sample(40, 4, 9);
        let f = ols_fit(&s).unwrap();
        let c = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let base = sandwich(&s, &f, &c, ResidualSource::OlsResiduals).unwrap();
        let dof = sandwich_with(
            &s,
            &f,
            &c,
            &SandwichOptions {
                dof_correction: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_relative_eq!(dof.sigma2_hat, base.sigma2_hat * 40.0 / 36.0, max_relative = 1e-14);
        let bc = sandwich(&s, &f, &c, ResidualSource::BcResiduals).unwrap();
        assert!(bc.sigma2_hat > 0.0 && bc.sigma2_hat != base.sigma2_hat);
        assert!(base.meat.is_none());
    }
}
