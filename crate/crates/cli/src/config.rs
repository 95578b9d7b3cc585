//! JSON experiment configuration.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use leanreg_core::{DgpKind, DgpSpec, Theta, WeightLaw};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{CliError, Result};

/// A scalar or a list of scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Wald,
    /// Wald interval centered at the uncorrected OLS estimate.
    WaldOls,
    Hulc,
    Tstat,
    Wild,
    Pairs,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Wald => "wald",
            Method::WaldOls => "wald_ols",
            Method::Hulc => "hulc",
            Method::Tstat => "tstat",
            Method::Wild => "wild",
            Method::Pairs => "pairs",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "wald" => Method::Wald,
            "wald_ols" => Method::WaldOls,
            "hulc" => Method::Hulc,
            "tstat" => Method::Tstat,
            "wild" => Method::Wild,
            "pairs" => Method::Pairs,
            _ => return None,
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum Threads {
    #[default]
    Auto,
    Count(usize),
}

impl<'de> Deserialize<'de> for Threads {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Name(String),
        }
        match Raw::deserialize(de)? {
            Raw::Count(0) => Err(serde::de::Error::custom("threads must be positive or \"auto\"")),
            Raw::Count(k) => Ok(Threads::Count(k)),
            Raw::Name(s) if s == "auto" => Ok(Threads::Auto),
            Raw::Name(s) => Err(serde::de::Error::custom(format!(
                "threads must be a count or \"auto\", got {s:?}"
            ))),
        }
    }
}

impl Threads {
    /// `None` lets rayon pick.
    pub fn count(&self) -> Option<usize> {
        match self {
            Threads::Auto => None,
            Threads::Count(k) => Some(*k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpGrid {
    pub kind: OneOrMany<DgpKind>,
    pub n: OneOrMany<usize>,
    pub d: OneOrMany<usize>,
    #[serde(default = "zero_rho")]
    pub rho: OneOrMany<f64>,
    #[serde(default = "first_coordinate")]
    pub theta: OneOrMany<Theta>,
}

fn zero_rho() -> OneOrMany<f64> {
    OneOrMany::One(0.0)
}

fn first_coordinate() -> OneOrMany<Theta> {
    OneOrMany::One(Theta::FirstCoordinate)
}

impl DgpGrid {
    /// Cartesian product in (kind, n, d, rho, theta) order. `rho` and `theta`
    /// do not affect the well-specified design, so those cells collapse to
    /// `rho = 0, theta = e1`.
    pub fn expand(&self) -> Vec<DgpSpec> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for kind in self.kind.to_vec() {
            for n in self.n.to_vec() {
                for d in self.d.to_vec() {
                    for rho in self.rho.to_vec() {
                        for theta in self.theta.to_vec() {
                            let spec = match kind {
                                DgpKind::WellSpecified => DgpSpec::well_specified(n, d, 0),
                                DgpKind::MisspecifiedCubic => DgpSpec::misspecified_cubic(n, d, rho, theta, 0),
                            };
                            if seen.insert(cell_key(&spec)) {
                                out.push(spec);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Stable identity of a grid cell; hashed to derive its random stream.
pub fn cell_key(spec: &DgpSpec) -> String {
    format!(
        "{}|n={}|d={}|rho={}|theta={}",
        spec.kind.as_str(),
        spec.n,
        spec.d,
        spec.rho,
        spec.theta.as_str()
    )
}

fn default_n_boot() -> usize {
    1000
}

fn default_tstat_batches() -> usize {
    6
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dgp: DgpGrid,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub replications: usize,
    #[serde(default = "default_n_boot")]
    pub n_boot: usize,
    pub master_seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub threads: Threads,
    #[serde(default = "default_tstat_batches")]
    pub tstat_batches: usize,
    #[serde(default)]
    pub weight_law: WeightLaw,
    /// Fill `mean_runtime_ms`; off by default so outputs stay byte-identical.
    #[serde(default)]
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_error(path, e.to_string()))?;
        cfg.validate().map_err(|m| config_error(path, m))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(format!("field `alpha`: must lie in (0, 1), got {}", self.alpha));
        }
        if self.replications == 0 {
            return Err("field `replications`: must be at least 1".into());
        }
        if self.methods.is_empty() {
            return Err("field `methods`: must be nonempty".into());
        }
        if self.n_boot == 0 && self.methods.iter().any(|m| matches!(m, Method::Wild | Method::Pairs)) {
            return Err("field `n_boot`: must be positive for bootstrap methods".into());
        }
        if self.tstat_batches < 2 {
            return Err("field `tstat_batches`: must be at least 2".into());
        }
        let cells = self.dgp.expand();
        if cells.is_empty() {
            return Err("field `dgp`: grid is empty".into());
        }
        for spec in &cells {
            spec.validate().map_err(|e| format!("field `dgp`: {e}"))?;
        }
        Ok(())
    }

    /// Methods in config order without repeats.
    pub fn unique_methods(&self) -> Vec<Method> {
        let mut seen = HashSet::new();
        self.methods.iter().copied().filter(|m| seen.insert(*m)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationConfig {
    #[serde(default = "well_specified")]
    pub kind: DgpKind,
    #[serde(default)]
    pub rho: f64,
    pub grid: Vec<(usize, usize)>,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasScalingConfig {
    #[serde(default = "misspecified_cubic")]
    pub kind: DgpKind,
    pub n: usize,
    pub d_list: Vec<usize>,
    pub reps: usize,
}

fn well_specified() -> DgpKind {
    DgpKind::WellSpecified
}

fn misspecified_cubic() -> DgpKind {
    DgpKind::MisspecifiedCubic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub master_seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub threads: Threads,
    #[serde(default)]
    pub concentration: Option<ConcentrationConfig>,
    #[serde(default)]
    pub bias_scaling: Option<BiasScalingConfig>,
}

impl DiagnoseConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_error(path, e.to_string()))?;
        cfg.validate().map_err(|m| config_error(path, m))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.concentration.is_none() && self.bias_scaling.is_none() {
            return Err("at least one of `concentration` or `bias_scaling` is required".into());
        }
        if let Some(c) = &self.concentration {
            if c.reps == 0 {
                return Err("field `concentration.reps`: must be at least 1".into());
            }
            if c.grid.is_empty() {
                return Err("field `concentration.grid`: must be nonempty".into());
            }
            if let Some((n, d)) = c.grid.iter().find(|(n, d)| *d == 0 || n <= d) {
                return Err(format!("field `concentration.grid`: need 0 < d < n, got ({n}, {d})"));
            }
            if !(0.0..1.0).contains(&c.rho) {
                return Err(format!("field `concentration.rho`: must lie in [0, 1), got {}", c.rho));
            }
        }
        if let Some(b) = &self.bias_scaling {
            if b.reps == 0 {
                return Err("field `bias_scaling.reps`: must be at least 1".into());
            }
            if b.d_list.is_empty() {
                return Err("field `bias_scaling.d_list`: must be nonempty".into());
            }
            if let Some(d) = b.d_list.iter().find(|&&d| d == 0 || d >= b.n) {
                return Err(format!(
                    "field `bias_scaling.d_list`: need 0 < d < n = {}, got {d}",
                    b.n
                ));
            }
        }
        Ok(())
    }
}

fn config_error(path: &Path, message: String) -> CliError {
    CliError::Config {
        path: path.to_path_buf(),
        message,
    }
}
