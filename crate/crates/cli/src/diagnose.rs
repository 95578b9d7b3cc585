//! Concentration and bias-scaling diagnostics.

use std::path::{Path, PathBuf};

use leanreg_core::diagnostics::{bias_scaling_probe, concentration_sweep, BiasScalingRow, ConcentrationSummary};
use leanreg_core::rng::stable_hash;
use leanreg_core::{DgpSpec, RngStream, Theta};
use serde::Serialize;

use crate::config::DiagnoseConfig;
use crate::error::{CliError, Result};
use crate::output::{run_in_pool, write_file};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnoseOutput {
    pub concentration: Option<Vec<ConcentrationSummary>>,
    pub bias_scaling: Option<Vec<BiasScalingRow>>,
}

pub fn run_diagnose(cfg: &DiagnoseConfig) -> Result<DiagnoseOutput> {
    let mut out = DiagnoseOutput::default();
    if let Some(c) = &cfg.concentration {
        let template = DgpSpec {
            kind: c.kind,
            n: 1,
            d: 1,
            rho: c.rho,
            theta: Theta::FirstCoordinate,
            seed: 0,
        };
        let rng = RngStream::new(cfg.master_seed, stable_hash(b"concentration"));
        out.concentration = Some(concentration_sweep(&c.grid, &template, c.reps, &rng)?);
    }
    if let Some(b) = &cfg.bias_scaling {
        let template = DgpSpec {
            kind: b.kind,
            n: b.n,
            d: 1,
            rho: 0.0,
            theta: Theta::FirstCoordinate,
            seed: 0,
        };
        let rng = RngStream::new(cfg.master_seed, stable_hash(b"bias_scaling"));
        out.bias_scaling = Some(bias_scaling_probe(b.n, &b.d_list, b.reps, &template, &rng)?);
    }
    Ok(out)
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn write_outputs(out: &DiagnoseOutput, dir: &Path) -> Result<()> {
    if let Some(rows) = &out.concentration {
        write_file(&dir.join("concentration.csv"), &to_csv(rows)?)?;
    }
    if let Some(rows) = &out.bias_scaling {
        write_file(&dir.join("bias_scaling.csv"), &to_csv(rows)?)?;
    }
    Ok(())
}

/// `leanreg diagnose`: returns the output directory.
pub fn cmd_diagnose(config_path: &Path, threads: Option<usize>, out_dir: Option<PathBuf>) -> Result<PathBuf> {
    let cfg = DiagnoseConfig::load(config_path)?;
    if threads == Some(0) {
        return Err(CliError::Argument("--threads must be positive".into()));
    }
    let threads = threads.or(cfg.threads.count());
    let dir = out_dir.unwrap_or_else(|| cfg.out_dir.clone());
    let out = run_in_pool(threads, || run_diagnose(&cfg))??;
    write_outputs(&out, &dir)?;
    Ok(dir)
}
