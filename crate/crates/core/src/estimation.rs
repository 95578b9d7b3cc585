//! Dense least-squares substrate.
//!
//! Everything downstream (bias correction, sandwich variance, the interval
//! constructions) works through the Cholesky factor of the scaled Gram matrix
//! `Σ̂ = XᵀX / n`. Solving the normal equations through `Σ̂` squares the
//! condition number of `X` compared with a QR factorization of `X`; in
//! exchange the factor is reused for `Σ̂⁻¹`-weighted leverages, the bias
//! estimate and leave-one-out updates without refactorizing. For the designs
//! this crate targets (random, well-conditioned, `d < n`) the squared
//! condition number stays far from double-precision limits.
//!
//! No intercept is added: prepend a column of ones to `X` if one is wanted.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot tolerance for the Gram Cholesky factorization.
pub const PIVOT_TOL: f64 = 1e-12;

/// Threshold on `1 − X_iᵀ(nΣ̂)⁻¹X_i` below which deleting row `i` leaves a
/// singular Gram matrix.
pub const LOO_DENOM_TOL: f64 = 1e-10;

/// An `n × d` design paired with an `n`-vector of responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Sample {
    /// Validates shapes and finiteness. `n ≥ d` is not checked here; a
    /// design with fewer rows than columns fails later with `SingularGram`.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidSample(format!(
                "design must be at least 1x1, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos % x.nrows(), pos / x.nrows());
            return Err(Error::InvalidSample(format!("non-finite X[{i},{j}]")));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSample(format!("non-finite y[{i}]")));
        }
        Ok(Self { x, y })
    }

    /// Builds a sample from row-major covariate rows.
    pub fn from_rows(rows: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidSample("no observations".into()));
        }
        let d = rows[0].len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        Self::new(x, DVector::from_column_slice(y))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Row `i` of the design as an owned column vector.
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    /// The sub-sample made of the given rows, in the given order. Rows may
    /// repeat (bootstrap resampling).
    pub fn select_rows(&self, rows: &[usize]) -> Sample {
        let x = self.x.select_rows(rows);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        Sample { x, y }
    }

    /// Same design, new response.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Sample> {
        Sample::new(self.x.clone(), y)
    }

    /// Same response, design replaced.
    pub fn with_design(&self, x: DMatrix<f64>) -> Result<Sample> {
        Sample::new(x, self.y.clone())
    }
}

/// `Σ̂ = n⁻¹XᵀX` together with its lower Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GramFactor {
    pub sigma_hat: DMatrix<f64>,
    pub chol: DMatrix<f64>,
    /// Smallest pivot `L_jj²` met during factorization.
    pub min_pivot: f64,
}

impl GramFactor {
    /// Factorizes an SPD matrix, failing when a pivot drops to
    /// `PIVOT_TOL · max diag` or below.
    pub fn factor(sigma_hat: DMatrix<f64>) -> Result<Self> {
        let d = sigma_hat.nrows();
        let max_diag = sigma_hat.diagonal().iter().fold(0.0_f64, |m, &v| m.max(v));
        let tol = PIVOT_TOL * max_diag;
        let mut chol = DMatrix::<f64>::zeros(d, d);
        let mut min_pivot = f64::INFINITY;
        for j in 0..d {
            let mut pivot = sigma_hat[(j, j)];
            for k in 0..j {
                pivot -= chol[(j, k)] * chol[(j, k)];
            }
            min_pivot = min_pivot.min(pivot);
            // `!(a > b)` also rejects NaN pivots.
            if !(pivot > tol) {
                return Err(Error::SingularGram { min_pivot: pivot, tol });
            }
            let ljj = pivot.sqrt();
            chol[(j, j)] = ljj;
            for i in (j + 1)..d {
                let mut s = sigma_hat[(i, j)];
                for k in 0..j {
                    s -= chol[(i, k)] * chol[(j, k)];
                }
                chol[(i, j)] = s / ljj;
            }
        }
        Ok(Self {
            sigma_hat,
            chol,
            min_pivot,
        })
    }

    pub fn dim(&self) -> usize {
        self.chol.nrows()
    }

    /// `L⁻¹ v` by forward substitution.
    pub fn solve_lower(&self, v: &DVector<f64>) -> DVector<f64> {
        let d = self.dim();
        let l = &self.chol;
        let mut out = v.clone();
        for i in 0..d {
            let mut s = out[i];
            for k in 0..i {
                s -= l[(i, k)] * out[k];
            }
            out[i] = s / l[(i, i)];
        }
        out
    }

    /// `L⁻ᵀ v` by back substitution.
    pub fn solve_upper(&self, v: &DVector<f64>) -> DVector<f64> {
        let d = self.dim();
        let l = &self.chol;
        let mut out = v.clone();
        for i in (0..d).rev() {
            let col = l.column(i);
            let mut s = out[i];
            for k in (i + 1)..d {
                s -= col[k] * out[k];
            }
            out[i] = s / col[i];
        }
        out
    }

    /// `Σ̂⁻¹ v` via two triangular solves.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.solve_upper(&self.solve_lower(v))
    }

    /// `L⁻¹`, lower triangular.
    pub fn chol_inverse(&self) -> DMatrix<f64> {
        let d = self.dim();
        let l = &self.chol;
        let mut inv = DMatrix::<f64>::zeros(d, d);
        for j in 0..d {
            inv[(j, j)] = 1.0 / l[(j, j)];
            for i in (j + 1)..d {
                let mut s = 0.0;
                for k in j..i {
                    s -= l[(i, k)] * inv[(k, j)];
                }
                inv[(i, j)] = s / l[(i, i)];
            }
        }
        inv
    }

    /// Explicit `Σ̂⁻¹`. Only diagnostics and tests need this.
    pub fn inverse(&self) -> DMatrix<f64> {
        let li = self.chol_inverse();
        li.transpose() * li
    }

    /// `‖v‖²_{Σ̂⁻¹} = vᵀΣ̂⁻¹v`.
    pub fn inv_norm_sq(&self, v: &DVector<f64>) -> f64 {
        self.solve_lower(v).norm_squared()
    }
}

/// OLS output for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta_hat: DVector<f64>,
    pub residuals: DVector<f64>,
    pub gram: GramFactor,
    /// `‖X_i‖²_{Σ̂⁻¹}` per observation. Sums to `n·d`.
    pub leverage_norms: DVector<f64>,
}

impl FitResult {
    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    pub fn d(&self) -> usize {
        self.beta_hat.len()
    }
}

/// `Σ̂ = n⁻¹XᵀX` and its Cholesky factor.
pub fn gram(sample: &Sample) -> Result<GramFactor> {
    let (n, d) = (sample.n(), sample.d());
    let mut sigma_hat = sample.x().tr_mul(sample.x());
    sigma_hat /= n as f64;
    // Force exact symmetry; the product may differ in the last ulp.
    for j in 0..d {
        for i in (j + 1)..d {
            sigma_hat[(j, i)] = sigma_hat[(i, j)];
        }
    }
    if n < d {
        return Err(Error::SingularGram {
            min_pivot: 0.0,
            tol: PIVOT_TOL * sigma_hat.diagonal().max(),
        });
    }
    GramFactor::factor(sigma_hat)
}

/// Least squares fit `β̂ = Σ̂⁻¹Γ̂` with `Γ̂ = n⁻¹Xᵀy`.
pub fn ols_fit(sample: &Sample) -> Result<FitResult> {
    let gram = gram(sample)?;
    let n = sample.n() as f64;
    let gamma_hat = sample.x().tr_mul(sample.y()) / n;
    let beta_hat = gram.solve(&gamma_hat);
    let residuals = sample.y() - sample.x() * &beta_hat;
    let leverage_norms = leverage_norms(sample.x(), &gram);
    Ok(FitResult {
        beta_hat,
        residuals,
        gram,
        leverage_norms,
    })
}

/// Row norms of `X L⁻ᵀ`, i.e. `‖L⁻¹X_i‖²`.
fn leverage_norms(x: &DMatrix<f64>, gram: &GramFactor) -> DVector<f64> {
    let z = x * gram.chol_inverse().transpose();
    DVector::from_iterator(z.nrows(), z.row_iter().map(|r| r.norm_squared()))
}

/// Delete-one OLS coefficients for every observation via the
/// Sherman–Morrison identity
/// `β̂₍₋ᵢ₎ = β̂ − (nΣ̂)⁻¹X_i r_i / (1 − h_i)`, `h_i = ‖X_i‖²_{Σ̂⁻¹}/n`.
pub fn loo_fits(sample: &Sample, fit: &FitResult) -> Result<Vec<DVector<f64>>> {
    let n = sample.n();
    let nf = n as f64;
    (0..n)
        .map(|i| {
            let denom = 1.0 - fit.leverage_norms[i] / nf;
            if denom <= LOO_DENOM_TOL {
                return Err(Error::DegenerateLeaveOneOut(i));
            }
            let direction = fit.gram.solve(&sample.row(i));
            Ok(&fit.beta_hat - direction * (fit.residuals[i] / (nf * denom)))
        })
        .collect()
}

/// Validates a contrast against a dimension.
pub(crate) fn check_contrast(c: &DVector<f64>, d: usize) -> Result<()> {
    if c.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: c.len(),
        });
    }
    if c.norm() == 0.0 {
        return Err(Error::ZeroContrast);
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::RngStream;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    pub(crate) fn random_sample(n: usize, d: usize, seed: u64) -> Sample {
        let mut g = RngStream::new(seed, 0).generator();
        let x = DMatrix::from_fn(n, d, |_, _| g.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| {
            x[(i, 0)] + x[(i, 0)].powi(3) * 0.5 + g.sample::<f64, _>(StandardNormal)
        });
        Sample::new(x, y).unwrap()
    }

    /// Least squares through the SVD; shares no code with the Cholesky path.
    pub(crate) fn svd_refit(sample: &Sample) -> DVector<f64> {
        sample.x().clone().svd(true, true).solve(sample.y(), 1e-14).unwrap()
    }

    fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn gram_identity_rows() {
        let s = Sample::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.0, 0.0]).unwrap();
        let g = gram(&s).unwrap();
        assert_eq!(g.sigma_hat, DMatrix::identity(2, 2) * 0.5);
    }

    #[test]
    fn gram_scalar() {
        let s = Sample::from_rows(&[vec![1.0], vec![2.0]], &[1.0, 0.0]).unwrap();
        let g = gram(&s).unwrap();
        assert_relative_eq!(g.sigma_hat[(0, 0)], 2.5);
        assert_relative_eq!(g.min_pivot, 2.5);
    }

    #[test]
    fn gram_rank_one_is_singular() {
        let s = Sample::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]], &[0.0, 0.0]).unwrap();
        assert!(matches!(gram(&s), Err(Error::SingularGram { .. })));
    }

    #[test]
    fn fewer_rows_than_columns_is_singular() {
        let s = random_sample(3, 5, 1);
        assert!(matches!(ols_fit(&s), Err(Error::SingularGram { .. })));
    }

    #[test]
    fn sample_rejects_bad_input() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        assert!(matches!(
            Sample::new(x, DVector::from_vec(vec![0.0, 0.0])),
            Err(Error::InvalidSample(_))
        ));
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert!(matches!(
            Sample::new(x.clone(), DVector::from_vec(vec![0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            Sample::new(x, DVector::from_vec(vec![0.0, f64::INFINITY])),
            Err(Error::InvalidSample(_))
        ));
        assert!(Sample::from_rows(&[vec![1.0, 2.0], vec![1.0]], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn chol_reconstructs_and_is_symmetric() {
        let s = random_sample(60, 6, 3);
        let g = gram(&s).unwrap();
        assert_eq!(g.sigma_hat, g.sigma_hat.transpose());
        let recon = &g.chol * g.chol.transpose();
        assert!((recon - &g.sigma_hat).norm() <= 1e-10 * g.sigma_hat.norm());
        assert!(g.min_pivot > 0.0);
        let inv = g.inverse();
        let eye = &g.sigma_hat * inv;
        assert!((eye - DMatrix::identity(6, 6)).norm() < 1e-10);
    }

    #[test]
    fn intercept_only_mean() {
        let s = Sample::from_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![1.0]], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let f = ols_fit(&s).unwrap();
        assert_relative_eq!(f.beta_hat[0], 2.5, epsilon = 1e-14);
    }

    #[test]
    fn two_point_fit() {
        let s = Sample::from_rows(&[vec![1.0], vec![2.0]], &[1.0, 0.0]).unwrap();
        let f = ols_fit(&s).unwrap();
        assert_relative_eq!(f.beta_hat[0], 0.2, epsilon = 1e-15);
        assert_relative_eq!(f.residuals[0], 0.8, epsilon = 1e-15);
        assert_relative_eq!(f.residuals[1], -0.4, epsilon = 1e-15);
        assert_relative_eq!(f.leverage_norms[0], 0.4, epsilon = 1e-15);
        assert_relative_eq!(f.leverage_norms[1], 1.6, epsilon = 1e-15);
    }

    #[test]
    fn perfect_fit_recovers_coefficients() {
        let s = random_sample(40, 4, 5);
        let b = DVector::from_vec(vec![1.5, -2.0, 0.25, 3.0]);
        let s = s.with_response(s.x() * &b).unwrap();
        let f = ols_fit(&s).unwrap();
        assert!(rel_err(&f.beta_hat, &b) < 1e-12);
        assert!(f.residuals.amax() < 1e-12);
    }

    #[test]
    fn normal_equations_and_trace_identity() {
        for seed in 0..10 {
            let s = random_sample(50 + seed as usize, 1 + seed as usize % 6, seed);
            let f = ols_fit(&s).unwrap();
            let grad = s.x().tr_mul(&f.residuals).amax();
            let scale = 1.0 + s.x().tr_mul(s.y()).amax();
            assert!(grad <= 1e-8 * scale, "normal equations {grad}");
            let nd = (s.n() * s.d()) as f64;
            assert!((f.leverage_norms.sum() - nd).abs() <= 1e-6 * nd);
            assert!(f.leverage_norms.iter().all(|&h| h >= 0.0));
            assert!(rel_err(&f.beta_hat, &svd_refit(&s)) < 1e-10);
        }
    }

    #[test]
    fn loo_small_examples() {
        let s = Sample::from_rows(&[vec![1.0], vec![1.0], vec![1.0]], &[0.0, 3.0, 3.0]).unwrap();
        let f = ols_fit(&s).unwrap();
        let loo = loo_fits(&s, &f).unwrap();
        assert_relative_eq!(loo[0][0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(loo[1][0], 1.5, epsilon = 1e-14);

        let s = Sample::from_rows(&[vec![1.0], vec![2.0]], &[1.0, 0.0]).unwrap();
        let f = ols_fit(&s).unwrap();
        let loo = loo_fits(&s, &f).unwrap();
        assert!(loo[0][0].abs() < 1e-14);
        assert_relative_eq!(loo[1][0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn loo_matches_refit() {
        let s = random_sample(20, 3, 99);
        let f = ols_fit(&s).unwrap();
        let loo = loo_fits(&s, &f).unwrap();
        for (i, b) in loo.iter().enumerate() {
            let rows: Vec<usize> = (0..s.n()).filter(|&k| k != i).collect();
            let oracle = svd_refit(&s.select_rows(&rows));
            assert!(rel_err(b, &oracle) < 1e-8, "row {i}");
        }
    }

    #[test]
    fn loo_square_design_is_degenerate() {
        let s = random_sample(3, 3, 4);
        let f = ols_fit(&s).unwrap();
        assert!(matches!(loo_fits(&s, &f), Err(Error::DegenerateLeaveOneOut(_))));
    }
}
