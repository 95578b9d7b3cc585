//! Normal and Student-t distribution functions and quantiles.
//!
//! Quantiles here are lower-tail: `normal_quantile(p)` solves `Φ(x) = p`.
//! Upper-tail quantiles `t_{q,ν}` as written in interval formulas are
//! obtained as `student_t_quantile(1 − q, ν)`.

use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("probability must lie in (0, 1), got {p}")))
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `Φ⁻¹(p)`: Acklam's rational approximation (relative error ~1e-9)
/// polished by Newton steps against the erfc-based CDF.
pub fn normal_quantile(p: f64) -> Result<f64> {
    check_probability(p)?;
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut x = acklam(p);
    for _ in 0..2 {
        let pdf = normal_pdf(x);
        if pdf <= 0.0 {
            break;
        }
        // Work in whichever tail keeps the residual well conditioned.
        let err = if x < 0.0 {
            normal_cdf(x) - p
        } else {
            (1.0 - p) - normal_cdf(-x)
        };
        x -= err / pdf;
    }
    Ok(x)
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -acklam(1.0 - p)
    }
}

/// `P(T > t)` for `t ≥ 0`.
fn t_upper_tail(t: f64, df: f64) -> f64 {
    0.5 * beta_reg(0.5 * df, 0.5, df / (df + t * t))
}

fn t_pdf(t: f64, df: f64) -> f64 {
    (ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * (df * PI).ln() - 0.5 * (df + 1.0) * (t * t / df).ln_1p())
        .exp()
}

pub fn student_t_cdf(t: f64, df: u32) -> f64 {
    let tail = t_upper_tail(t.abs(), f64::from(df));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Inverse of the regularized incomplete beta function `I_x(a, b)` in `x`,
/// by safeguarded Newton iteration on a shrinking bracket.
pub fn inverse_beta_reg(a: f64, b: f64, target: f64) -> f64 {
    if target <= 0.0 {
        return 0.0;
    }
    if target >= 1.0 {
        return 1.0;
    }
    let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut x = 0.5;
    for _ in 0..200 {
        let f = beta_reg(a, b, x) - target;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let density = ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta).exp();
        let mut next = x - f / density;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-16 * x.max(1e-300) || hi - lo <= 1e-300 {
            return next;
        }
        x = next;
    }
    x
}

/// Lower-tail Student-t quantile `F_ν⁻¹(p)`.
pub fn student_t_quantile(p: f64, df: u32) -> Result<f64> {
    check_probability(p)?;
    if df == 0 {
        return Err(Error::Domain("degrees of freedom must be positive".into()));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let nu = f64::from(df);
    let tail = p.min(1.0 - p);
    // P(|T| > t) = I_{ν/(ν+t²)}(ν/2, 1/2)
    let x = inverse_beta_reg(0.5 * nu, 0.5, 2.0 * tail);
    let mut t = (nu * (1.0 - x) / x).sqrt();
    for _ in 0..3 {
        let pdf = t_pdf(t, nu);
        if !(pdf > 0.0) || !t.is_finite() {
            break;
        }
        let step = (t_upper_tail(t, nu) - tail) / pdf;
        t += step;
        if step.abs() <= 1e-15 * t.abs() {
            break;
        }
    }
    Ok(if p < 0.5 { -t } else { t })
}

/// Upper-tail quantile `t_{q,ν}`: the point with `P(T > t) = q`.
pub fn student_t_upper_quantile(q: f64, df: u32) -> Result<f64> {
    check_probability(q)?;
    student_t_quantile(1.0 - q, df)
}
