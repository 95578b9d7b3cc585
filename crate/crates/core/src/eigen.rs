//! Extreme eigenvalues of symmetric matrices.
//!
//! Dense problems (`d ≤ 512`) go through Householder tridiagonalization and
//! implicit symmetric QR (nalgebra's `SymmetricEigen`). Larger ones use
//! Lanczos with full reorthogonalization, which needs only matrix–vector
//! products and converges quickly at the ends of the spectrum.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const LANCZOS_THRESHOLD: usize = 512;

/// Relative convergence target for Ritz values.
const RITZ_TOL: f64 = 1e-12;

pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NotSymmetric(f64::INFINITY));
    }
    let scale = m.amax().max(1.0);
    let mut worst = 0.0_f64;
    for j in 0..m.ncols() {
        for i in (j + 1)..m.nrows() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > 1e-10 * scale {
        return Err(Error::NotSymmetric(worst));
    }
    Ok(())
}

/// `(λ_min, λ_max)`.
pub fn extreme_eigenvalues(m: &DMatrix<f64>) -> Result<(f64, f64)> {
    check_symmetric(m)?;
    if m.nrows() <= LANCZOS_THRESHOLD {
        Ok(dense_extremes(m))
    } else {
        Ok(lanczos_extremes(m))
    }
}

pub fn dense_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = m.clone().symmetric_eigenvalues();
    (ev.min(), ev.max())
}

/// Lanczos iteration from a fixed pseudo-random start vector. Runs at least
/// `2⌈√d⌉ + 20` steps, then continues until both extreme Ritz pairs have
/// residual `|β_k s_k| ≤ 1e-12·‖T‖` or the Krylov space is exhausted.
pub fn lanczos_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let d = m.nrows();
    if d == 0 {
        return (f64::NAN, f64::NAN);
    }
    let min_steps = (2 * (d as f64).sqrt().ceil() as usize + 20).min(d);
    let mut g = RngStream::new(0x001a_2c05, 0).generator();
    let mut v = DVector::from_fn(d, |_, _| g.sample::<f64, _>(StandardNormal));
    v /= v.norm();

    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut extremes = (f64::NAN, f64::NAN);

    for k in 0..d {
        let mut w = m * &v;
        let alpha = v.dot(&w);
        w.axpy(-alpha, &v, 1.0);
        if let Some(prev) = basis.last() {
            w.axpy(-betas[k - 1], prev, 1.0);
        }
        basis.push(v.clone());
        // Two passes of Gram–Schmidt against the whole basis.
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&w);
                w.axpy(-proj, q, 1.0);
            }
        }
        alphas.push(alpha);
        let beta = w.norm();

        let steps = alphas.len();
        if steps >= min_steps || steps == d || beta <= 1e-14 {
            let t = tridiagonal(&alphas, &betas);
            let eig = SymmetricEigen::new(t);
            let (imin, imax) = arg_extremes(&eig.eigenvalues);
            extremes = (eig.eigenvalues[imin], eig.eigenvalues[imax]);
            let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
            let last = steps - 1;
            let converged = [imin, imax]
                .iter()
                .all(|&i| (beta * eig.eigenvectors[(last, i)]).abs() <= RITZ_TOL * scale);
            if converged || beta <= 1e-14 * scale || steps == d {
                break;
            }
        }
        betas.push(beta);
        v = w / beta;
    }
    extremes
}

fn tridiagonal(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    t
}

fn arg_extremes(v: &DVector<f64>) -> (usize, usize) {
    let (mut imin, mut imax) = (0, 0);
    for i in 1..v.len() {
        if v[i] < v[imin] {
            imin = i;
        }
        if v[i] > v[imax] {
            imax = i;
        }
    }
    (imin, imax)
}

/// `Σ^{−1/2} = UΛ^{−1/2}Uᵀ` for SPD `Σ`.
pub fn inverse_sqrt(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(sigma)?;
    let eig = SymmetricEigen::new(sigma.clone());
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Domain("population covariance is not positive definite".into()));
    }
    let inv_root = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * inv_root * eig.eigenvectors.transpose())
}
