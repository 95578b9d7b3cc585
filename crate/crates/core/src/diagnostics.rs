//! Monte Carlo probes of Gram-matrix concentration and estimator error.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::debias::moment_bias;
use crate::dgp::{generate, ground_truth, DgpSpec};
use crate::eigen::{check_symmetric, extreme_eigenvalues, inverse_sqrt};
use crate::error::{Error, Result};
use crate::estimation::{ols_fit, FitResult, Sample};
use crate::rng::{stable_hash, RngStream};

/// `Σ^{−1/2}`, or the identity without materializing it.
#[derive(Debug, Clone, PartialEq)]
pub enum PopulationScale {
    Identity,
    InvSqrt(DMatrix<f64>),
}

impl PopulationScale {
    pub fn from_covariance(sigma: &DMatrix<f64>) -> Result<Self> {
        Ok(Self::InvSqrt(inverse_sqrt(sigma)?))
    }
}

/// `D_Σ = ‖Σ^{−1/2}Σ̂Σ^{−1/2} − I‖_op` and `λ_min(Σ^{−1/2}Σ̂Σ^{−1/2})`.
pub fn operator_norm_dev(sigma_hat: &DMatrix<f64>, scale: &PopulationScale) -> Result<(f64, f64)> {
    check_symmetric(sigma_hat)?;
    let (lo, hi) = match scale {
        PopulationScale::Identity => extreme_eigenvalues(sigma_hat)?,
        PopulationScale::InvSqrt(s) => {
            let mut m = s * sigma_hat * s;
            // Restore exact symmetry lost in the two products.
            let d = m.nrows();
            for j in 0..d {
                for i in (j + 1)..d {
                    let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                    m[(i, j)] = avg;
                    m[(j, i)] = avg;
                }
            }
            extreme_eigenvalues(&m)?
        }
    };
    Ok(((hi - 1.0).abs().max((lo - 1.0).abs()), lo))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcentrationSnapshot {
    pub d_sigma: f64,
    pub lambda_min: f64,
    /// `‖β̂ − β‖_Σ`
    pub beta_err_sigma: f64,
    /// `max_i |X_iᵀ(β̂ − β)|`
    pub max_fitted_dev: f64,
    pub n: usize,
    pub d: usize,
}

/// Snapshot of one fit against known population `Σ` (identity when `None`)
/// and `β`.
pub fn snapshot(
    sample: &Sample,
    fit: &FitResult,
    beta_star: &DVector<f64>,
    sigma_pop: Option<&DMatrix<f64>>,
) -> Result<ConcentrationSnapshot> {
    let d = sample.d();
    if beta_star.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: beta_star.len(),
        });
    }
    let scale = match sigma_pop {
        None => PopulationScale::Identity,
        Some(s) => PopulationScale::from_covariance(s)?,
    };
    let (d_sigma, lambda_min) = operator_norm_dev(&fit.gram.sigma_hat, &scale)?;
    let err = &fit.beta_hat - beta_star;
    let beta_err_sigma = match sigma_pop {
        None => err.norm(),
        Some(s) => err.dot(&(s * &err)).max(0.0).sqrt(),
    };
    let max_fitted_dev = (sample.x() * &err).amax();
    Ok(ConcentrationSnapshot {
        d_sigma,
        lambda_min,
        beta_err_sigma,
        max_fitted_dev,
        n: sample.n(),
        d,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcentrationSummary {
    pub n: usize,
    pub d: usize,
    pub reps: usize,
    pub median_d_sigma: f64,
    pub median_lambda_min: f64,
    pub median_beta_err: f64,
    pub median_max_fitted_dev: f64,
    /// `median D_Σ / √(d/n)`
    pub rate_ratio_d_sigma: f64,
    /// `median ‖β̂ − β‖_Σ / √(d/n)`
    pub rate_ratio_beta_err: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m == 0 {
        f64::NAN
    } else if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Stream for replication `rep` of grid cell `(n, d)`.
pub(crate) fn cell_stream(rng: &RngStream, n: usize, d: usize, rep: usize) -> RngStream {
    let key = stable_hash(format!("{n}x{d}").as_bytes());
    rng.substream(key).substream(rep as u64)
}

/// For each `(n, d)`: `reps` draws of the template design, summarized by
/// medians.
pub fn concentration_sweep(
    grid: &[(usize, usize)],
    template: &DgpSpec,
    reps: usize,
    rng: &RngStream,
) -> Result<Vec<ConcentrationSummary>> {
    if reps == 0 {
        return Err(Error::Domain("reps must be positive".into()));
    }
    grid.iter()
        .map(|&(n, d)| {
            if n <= d {
                return Err(Error::Domain(format!("grid cell needs n > d, got n={n}, d={d}")));
            }
            let spec = DgpSpec { n, d, ..*template };
            let truth = ground_truth(&spec);
            let snaps: Vec<ConcentrationSnapshot> = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let sample = generate(&spec, &cell_stream(rng, n, d, r))?;
                    let fit = ols_fit(&sample)?;
                    snapshot(&sample, &fit, &truth.beta_star, None)
                })
                .collect::<Result<_>>()?;
            let col = |f: fn(&ConcentrationSnapshot) -> f64| median(&snaps.iter().map(f).collect::<Vec<_>>());
            let rate = (d as f64 / n as f64).sqrt();
            let median_d_sigma = col(|s| s.d_sigma);
            let median_beta_err = col(|s| s.beta_err_sigma);
            Ok(ConcentrationSummary {
                n,
                d,
                reps,
                median_d_sigma,
                median_lambda_min: col(|s| s.lambda_min),
                median_beta_err,
                median_max_fitted_dev: col(|s| s.max_fitted_dev),
                rate_ratio_d_sigma: median_d_sigma / rate,
                rate_ratio_beta_err: median_beta_err / rate,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasScalingRow {
    pub n: usize,
    pub d: usize,
    pub reps: usize,
    /// Monte Carlo mean of `√n·cᵀ(β̂ − β)`.
    pub mean_raw: f64,
    pub se_raw: f64,
    /// Monte Carlo mean of `√n·cᵀ(β̂_bc − β)`.
    pub mean_bc: f64,
    pub se_bc: f64,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Raw versus bias-corrected `√n`-scaled error of the canonical contrast at
/// fixed `n` over a list of dimensions.
pub fn bias_scaling_probe(
    n: usize,
    d_list: &[usize],
    reps: usize,
    template: &DgpSpec,
    rng: &RngStream,
) -> Result<Vec<BiasScalingRow>> {
    if reps == 0 {
        return Err(Error::Domain("reps must be positive".into()));
    }
    let root_n = (n as f64).sqrt();
    d_list
        .iter()
        .map(|&d| {
            let spec = DgpSpec { n, d, ..*template };
            let truth = ground_truth(&spec);
            let c = &truth.contrast;
            let pairs: Vec<(f64, f64)> = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let sample = generate(&spec, &cell_stream(rng, n, d, r))?;
                    let fit = ols_fit(&sample)?;
                    let bc = moment_bias(&sample, &fit);
                    Ok((
                        root_n * (c.dot(&fit.beta_hat) - truth.target),
                        root_n * (c.dot(&bc.beta_bc) - truth.target),
                    ))
                })
                .collect::<Result<_>>()?;
            let raw: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let bc: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let (mean_raw, se_raw) = mean_se(&raw);
            let (mean_bc, se_bc) = mean_se(&bc);
            Ok(BiasScalingRow {
                n,
                d,
                reps,
                mean_raw,
                se_raw,
                mean_bc,
                se_bc,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::Theta;
    use crate::eigen::tests::{jacobi_eigenvalues, random_spd};

    #[test]
    fn operator_norm_examples() {
        let id = PopulationScale::Identity;
        let (dev, lo) = operator_norm_dev(&(DMatrix::identity(2, 2) * 0.5), &id).unwrap();
        assert!((dev - 0.5).abs() < 1e-14 && (lo - 0.5).abs() < 1e-14);
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.9]));
        let (dev, lo) = operator_norm_dev(&m, &id).unwrap();
        assert!((dev - 1.0).abs() < 1e-14 && (lo - 0.9).abs() < 1e-14);
        let sigma = random_spd(4, 20, 1);
        let scale = PopulationScale::from_covariance(&sigma).unwrap();
        let (dev, lo) = operator_norm_dev(&sigma, &scale).unwrap();
        assert!(dev < 1e-10 && (lo - 1.0).abs() < 1e-10);
        assert!(operator_norm_dev(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]), &id).is_err());
    }

    #[test]
    fn operator_norm_matches_full_spectrum() {
        for d in [3usize, 10, 33, 64] {
            let m = random_spd(d, 2 * d + 3, d as u64 + 7);
            let ev = jacobi_eigenvalues(&m);
            let want = (ev[d - 1] - 1.0).abs().max((ev[0] - 1.0).abs());
            let (dev, lo) = operator_norm_dev(&m, &PopulationScale::Identity).unwrap();
            assert!((dev - want).abs() <= 1e-8 * want.max(1.0), "d={d}");
            assert!((lo - ev[0]).abs() <= 1e-8 * ev[0].abs());
        }
    }

    #[test]
    fn snapshot_rotation_invariant() {
        let spec = DgpSpec::well_specified(200, 5, 3);
        let sample = spec.sample().unwrap();
        let truth = ground_truth(&spec);
        let fit = ols_fit(&sample).unwrap();
        let base = snapshot(&sample, &fit, &truth.beta_star, None).unwrap();

        let q = random_spd(5, 30, 9).qr().q();
        let rotated = sample.with_design(sample.x() * &q).unwrap();
        let rfit = ols_fit(&rotated).unwrap();
        let rbeta = q.transpose() * &truth.beta_star;
        let rot = snapshot(&rotated, &rfit, &rbeta, None).unwrap();
        // Σ → QᵀΣQ is still the identity; pass it explicitly too.
        let rot_explicit = snapshot(&rotated, &rfit, &rbeta, Some(&(q.transpose() * &q))).unwrap();
        for s in [rot, rot_explicit] {
            assert!((s.d_sigma - base.d_sigma).abs() <= 1e-8 * base.d_sigma);
            assert!((s.lambda_min - base.lambda_min).abs() <= 1e-8);
            assert!((s.beta_err_sigma - base.beta_err_sigma).abs() <= 1e-8 * base.beta_err_sigma);
            assert!((s.max_fitted_dev - base.max_fitted_dev).abs() <= 1e-8 * base.max_fitted_dev);
        }
    }

    #[test]
    fn sweep_single_cell_and_determinism() {
        let template = DgpSpec::well_specified(0, 0, 0);
        let rng = RngStream::new(5, 0);
        let a = concentration_sweep(&[(300, 6)], &template, 20, &rng).unwrap();
        let b = concentration_sweep(&[(300, 6)], &template, 20, &rng).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1);
        let row = a[0];
        assert!(row.median_d_sigma > 0.0 && row.median_lambda_min > 0.0 && row.median_lambda_min < 1.0);
        assert!((row.rate_ratio_d_sigma - row.median_d_sigma / (6.0f64 / 300.0).sqrt()).abs() < 1e-12);
        assert!(concentration_sweep(&[(5, 5)], &template, 3, &rng).is_err());
    }

    #[test]
    fn d_sigma_decreases_in_n() {
        let template = DgpSpec::well_specified(0, 0, 0);
        let rows = concentration_sweep(
            &[(200, 10), (800, 10), (3200, 10)],
            &template,
            200,
            &RngStream::new(1, 1),
        )
        .unwrap();
        assert!(rows[0].median_d_sigma > rows[1].median_d_sigma);
        assert!(rows[1].median_d_sigma > rows[2].median_d_sigma);
    }

    #[test]
    fn lambda_min_lower_bound() {
        let template = DgpSpec::well_specified(0, 0, 0);
        let (n, d) = (2000usize, 100usize);
        let row = concentration_sweep(&[(n, d)], &template, 30, &RngStream::new(2, 2)).unwrap()[0];
        let bound = 1.0 - 9.0 * ((d as f64 + 2.0 * (2.0 * n as f64).ln()) / n as f64).sqrt();
        assert!(row.median_lambda_min >= bound, "{} < {bound}", row.median_lambda_min);
    }

    #[test]
    fn beta_error_scales_with_root_d() {
        let template = DgpSpec::well_specified(0, 0, 0);
        let rows = concentration_sweep(&[(2000, 20), (2000, 40)], &template, 200, &RngStream::new(3, 3)).unwrap();
        let ratio = rows[1].median_beta_err / rows[0].median_beta_err;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() <= 0.25, "ratio {ratio}");
    }

    #[test]
    fn well_specified_probe_is_unbiased() {
        let template = DgpSpec::well_specified(0, 0, 0);
        let rows = bias_scaling_probe(400, &[10, 40], 300, &template, &RngStream::new(4, 4)).unwrap();
        for r in rows {
            assert!(r.mean_raw.abs() <= 3.0 * r.se_raw, "{r:?}");
            assert!(r.mean_bc.abs() <= 3.0 * r.se_bc, "{r:?}");
        }
        let cubic = DgpSpec::misspecified_cubic(0, 0, 0.0, Theta::FirstCoordinate, 0);
        assert!(bias_scaling_probe(50, &[3], 0, &cubic, &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn median_helper() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
