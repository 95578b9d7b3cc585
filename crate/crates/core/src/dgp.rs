//! Synthetic designs with known projection parameters.
//!
//! * `WellSpecified`: `X ~ N(0, I_d)`, `Y = 2X(1) + ε`, so `β = 2e₁`.
//! * `MisspecifiedCubic`: `X = Z ⊙ W` with `Z ~ N(0, I_d)` and `W` compound
//!   symmetric (`Cov W = (1−ρ)I + ρ11ᵀ`), `Y = (Xᵀθ)³ + ε`. The entries of
//!   `X` are uncorrelated with unit variance (`E[XXᵀ] = I_d`) and
//!   `β = 3(1+2ρ²)‖θ‖²θ + 6(1−ρ²)θ^⊙3`.
//!
//! `W` is drawn through its one-factor form `√ρ·g·1 + √(1−ρ)·h`, which costs
//! `O(d)` per row.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{check_contrast, Sample};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    #[serde(alias = "WellSpecified", alias = "well")]
    WellSpecified,
    #[serde(alias = "MisspecifiedCubic", alias = "cubic")]
    MisspecifiedCubic,
}

impl DgpKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DgpKind::WellSpecified => "well_specified",
            DgpKind::MisspecifiedCubic => "misspecified_cubic",
        }
    }
}

/// Direction `θ` of the cubic signal; also the canonical contrast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theta {
    /// `θ = e₁`
    #[serde(alias = "FirstCoordinate", alias = "e1")]
    FirstCoordinate,
    /// `θ = 1_d/√d`
    #[serde(alias = "UniformUnit", alias = "uniform")]
    UniformUnit,
}

impl Theta {
    pub fn as_str(&self) -> &'static str {
        match self {
            Theta::FirstCoordinate => "e1",
            Theta::UniformUnit => "uniform",
        }
    }

    pub fn vector(&self, d: usize) -> DVector<f64> {
        match self {
            Theta::FirstCoordinate => unit(d, 0),
            Theta::UniformUnit => DVector::from_element(d, 1.0 / (d as f64).sqrt()),
        }
    }
}

pub(crate) fn unit(d: usize, k: usize) -> DVector<f64> {
    let mut e = DVector::zeros(d);
    e[k] = 1.0;
    e
}

fn default_theta() -> Theta {
    Theta::FirstCoordinate
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub n: usize,
    pub d: usize,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_theta")]
    pub theta: Theta,
    #[serde(default)]
    pub seed: u64,
}

impl DgpSpec {
    pub fn well_specified(n: usize, d: usize, seed: u64) -> Self {
        Self {
            kind: DgpKind::WellSpecified,
            n,
            d,
            rho: 0.0,
            theta: Theta::FirstCoordinate,
            seed,
        }
    }

    pub fn misspecified_cubic(n: usize, d: usize, rho: f64, theta: Theta, seed: u64) -> Self {
        Self {
            kind: DgpKind::MisspecifiedCubic,
            n,
            d,
            rho,
            theta,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::Domain(format!(
                "n and d must be positive (n={}, d={})",
                self.n, self.d
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Domain(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        Ok(())
    }

    /// The stream `generate` uses when called through [`DgpSpec::sample`].
    pub fn stream(&self) -> RngStream {
        RngStream::new(self.seed, 0)
    }

    pub fn sample(&self) -> Result<Sample> {
        generate(self, &self.stream())
    }

    /// `Σ = E[XXᵀ]`; the identity for both built-in designs.
    pub fn population_covariance(&self) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(self.d, self.d))
    }

    /// The contrast each design is scored on: `e₁` when well specified,
    /// `θ` otherwise.
    pub fn canonical_contrast(&self) -> DVector<f64> {
        match self.kind {
            DgpKind::WellSpecified => unit(self.d, 0),
            DgpKind::MisspecifiedCubic => self.theta.vector(self.d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub beta_star: DVector<f64>,
    pub contrast: DVector<f64>,
    /// `cᵀβ` for the canonical contrast.
    pub target: f64,
}

pub fn ground_truth(spec: &DgpSpec) -> GroundTruth {
    let d = spec.d;
    let contrast = spec.canonical_contrast();
    let beta_star = match spec.kind {
        DgpKind::WellSpecified => unit(d, 0) * 2.0,
        DgpKind::MisspecifiedCubic => {
            let theta = spec.theta.vector(d);
            let rho2 = spec.rho * spec.rho;
            let cubed = theta.map(|t| t * t * t);
            &theta * (3.0 * (1.0 + 2.0 * rho2) * theta.norm_squared()) + cubed * (6.0 * (1.0 - rho2))
        }
    };
    let target = contrast.dot(&beta_star);
    GroundTruth {
        beta_star,
        contrast,
        target,
    }
}

/// One draw of `W ~ N(0, (1−ρ)I + ρ11ᵀ)` into `out`.
pub fn draw_compound_symmetric<R: Rng + ?Sized>(rng: &mut R, rho: f64, out: &mut [f64]) {
    let g: f64 = rng.sample(StandardNormal);
    let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
    for w in out.iter_mut() {
        let h: f64 = rng.sample(StandardNormal);
        *w = a * g + b * h;
    }
}

/// Draws one observation `(X, Y)` into `x` and returns `Y`.
pub(crate) fn draw_observation<R: Rng + ?Sized>(
    spec: &DgpSpec,
    theta: &DVector<f64>,
    rng: &mut R,
    x: &mut [f64],
    scratch: &mut [f64],
) -> f64 {
    match spec.kind {
        DgpKind::WellSpecified => {
            for v in x.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let eps: f64 = rng.sample(StandardNormal);
            2.0 * x[0] + eps
        }
        DgpKind::MisspecifiedCubic => {
            for v in x.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            draw_compound_symmetric(rng, spec.rho, scratch);
            let mut index = 0.0;
            for ((v, w), t) in x.iter_mut().zip(scratch.iter()).zip(theta.iter()) {
                *v *= w;
                index += *v * t;
            }
            let eps: f64 = rng.sample(StandardNormal);
            index * index * index + eps
        }
    }
}

/// Draws `spec.n` observations sequentially from `rng`.
pub fn generate(spec: &DgpSpec, rng: &RngStream) -> Result<Sample> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let theta = spec.theta.vector(d);
    let mut g = rng.generator();
    let mut x = DMatrix::<f64>::zeros(n, d);
    let mut y = DVector::<f64>::zeros(n);
    let mut row = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    for i in 0..n {
        y[i] = draw_observation(spec, &theta, &mut g, &mut row, &mut scratch);
        for (j, v) in row.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    Sample::new(x, y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaEstimate {
    pub kappa: f64,
    pub se: f64,
    /// Monte Carlo estimate of `σ_c² = Var[cᵀΣ⁻¹X(Y − Xᵀβ)]`.
    pub sigma2: f64,
    pub draws: usize,
}

const KAPPA_CHUNK: usize = 8192;

/// Monte Carlo estimate of the Edgeworth coefficient
/// `κ_c = n^{−5/2} C(n,2) E[{cᵀψ₁}{cᵀψ₂}{cᵀφ₁₂}] / σ_c³` with
/// `ψ(x,y) = (1 + 1/n)Σ⁻¹x(y − xᵀβ)` and
/// `φ(x,y,x',y') = (1 − 1/n)Σ⁻¹(Σ − xxᵀ)Σ⁻¹x'(y' − x'ᵀβ)`, using the
/// population `Σ = I` and `β` of `spec` and `n = spec.n`.
///
/// The sign is reported as defined; how it enters a corrected normal
/// approximation is left to the caller. The standard error ignores the
/// uncertainty in `σ̂_c`.
pub fn population_kappa_mc(spec: &DgpSpec, c: &DVector<f64>, n_mc: usize, rng: &RngStream) -> Result<KappaEstimate> {
    spec.validate()?;
    check_contrast(c, spec.d)?;
    if spec.population_covariance().is_none() {
        return Err(Error::UnknownPopulation);
    }
    if n_mc < 2 {
        return Err(Error::Domain("need at least two Monte Carlo draws".into()));
    }
    let truth = ground_truth(spec);
    let beta = &truth.beta_star;
    let theta = spec.theta.vector(spec.d);
    let n = spec.n as f64;
    let chunks = n_mc.div_ceil(KAPPA_CHUNK);

    // Per chunk: (Σ prod, Σ prod², Σ s², count)
    let partial: Vec<[f64; 4]> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let count = KAPPA_CHUNK.min(n_mc - k * KAPPA_CHUNK);
            let mut g = rng.substream(k as u64).generator();
            let d = spec.d;
            let (mut x1, mut x2, mut scratch) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
            let mut acc = [0.0; 4];
            for _ in 0..count {
                let y1 = draw_observation(spec, &theta, &mut g, &mut x1, &mut scratch);
                let y2 = draw_observation(spec, &theta, &mut g, &mut x2, &mut scratch);
                let (mut e1, mut e2, mut c1, mut c2, mut cross) = (y1, y2, 0.0, 0.0, 0.0);
                for j in 0..d {
                    e1 -= x1[j] * beta[j];
                    e2 -= x2[j] * beta[j];
                    c1 += c[j] * x1[j];
                    c2 += c[j] * x2[j];
                    cross += x1[j] * x2[j];
                }
                let (s1, s2) = (c1 * e1, c2 * e2);
                let psi1 = (1.0 + 1.0 / n) * s1;
                let psi2 = (1.0 + 1.0 / n) * s2;
                let phi = (1.0 - 1.0 / n) * (c2 - c1 * cross) * e2;
                let prod = psi1 * psi2 * phi;
                acc[0] += prod;
                acc[1] += prod * prod;
                acc[2] += s1 * s1 + s2 * s2;
                acc[3] += 1.0;
            }
            acc
        })
        .collect();

    let mut tot = [0.0; 4];
    for p in &partial {
        for (t, v) in tot.iter_mut().zip(p) {
            *t += v;
        }
    }
    let m = tot[3];
    let mean = tot[0] / m;
    let var = ((tot[1] - m * mean * mean) / (m - 1.0)).max(0.0);
    let sigma2 = tot[2] / (2.0 * m);
    let scale = n.powf(-2.5) * n * (n - 1.0) / 2.0 / sigma2.powf(1.5);
    Ok(KappaEstimate {
        kappa: scale * mean,
        se: scale * (var / m).sqrt(),
        sigma2,
        draws: n_mc,
    })
}
