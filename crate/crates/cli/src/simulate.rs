//! Monte Carlo coverage experiments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use leanreg_core::dgp::generate;
use leanreg_core::inference::FittedModel;
use leanreg_core::rng::stable_hash;
use leanreg_core::{ground_truth, DgpKind, DgpSpec, RngStream};
use rayon::prelude::*;

use crate::config::{cell_key, ExperimentConfig, Method};
use crate::error::{CliError, Result};
use crate::methods::{build_interval, MethodOptions};
use crate::output::{run_in_pool, write_file};

pub const COVERAGE_HEADER: &str =
    "dgp,n,d,rho,theta,method,alpha,replications,target,coverage,coverage_se,mean_width,width_se,mean_runtime_ms,seed";
pub const WIDTHS_HEADER: &str = "dgp,n,d,rho,theta,method,rep,point,lower,upper,width,covered,skipped_draws";
pub const SKIPPED_HEADER: &str = "dgp,n,d,rho,theta,method,failed_reps,reason";
pub const PLOT_HEADER: &str = "d,method,coverage,mean_width";

const DATA_STREAM: u64 = 0;

/// One replication of one method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepRecord {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub covered: bool,
    pub skipped_draws: usize,
    pub runtime_ms: f64,
}

impl RepRecord {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MethodOutcome {
    Done(Vec<RepRecord>),
    /// Some replication failed; the first error and how many reps failed.
    Failed {
        failed_reps: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub spec: DgpSpec,
    pub target: f64,
    pub methods: Vec<(Method, MethodOutcome)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub coverage: f64,
    pub coverage_se: f64,
    pub mean_width: f64,
    pub width_se: f64,
    pub mean_runtime_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn summarize(records: &[RepRecord]) -> CoverageRow {
    let reps = records.len() as f64;
    let coverage = records.iter().filter(|r| r.covered).count() as f64 / reps;
    let mean_width = compensated_sum(records.iter().map(RepRecord::width)) / reps;
    let width_se = if records.len() > 1 {
        let ss = compensated_sum(records.iter().map(|r| (r.width() - mean_width).powi(2)));
        (ss / (reps - 1.0) / reps).sqrt()
    } else {
        0.0
    };
    CoverageRow {
        coverage,
        coverage_se: (coverage * (1.0 - coverage) / reps).sqrt(),
        mean_width,
        width_se,
        mean_runtime_ms: compensated_sum(records.iter().map(|r| r.runtime_ms)) / reps,
    }
}

/// Stream of replication `rep` in a cell. Depends only on the master seed,
/// the cell and `rep`, so the method list never perturbs the data.
pub fn replication_stream(master_seed: u64, spec: &DgpSpec, rep: usize) -> RngStream {
    RngStream::new(master_seed, stable_hash(cell_key(spec).as_bytes())).substream(rep as u64)
}

fn method_stream(rep_stream: &RngStream, method: Method) -> RngStream {
    rep_stream.substream(stable_hash(method.as_str().as_bytes()))
}

type RepOutcome = Vec<std::result::Result<RepRecord, String>>;

fn run_replication(
    spec: &DgpSpec,
    target: f64,
    c: &nalgebra::DVector<f64>,
    methods: &[Method],
    opts: &MethodOptions,
    rep_stream: &RngStream,
) -> RepOutcome {
    let fail_all = |e: String| methods.iter().map(|_| Err(e.clone())).collect();
    let sample = match generate(spec, &rep_stream.substream(DATA_STREAM)) {
        Ok(s) => s,
        Err(e) => return fail_all(e.to_string()),
    };
    let started = Instant::now();
    let model = match FittedModel::new(&sample) {
        Ok(m) => m,
        Err(e) => return fail_all(e.to_string()),
    };
    let model_ms = started.elapsed().as_secs_f64() * 1e3;
    methods
        .iter()
        .map(|&m| {
            let t0 = Instant::now();
            let out = build_interval(m, &sample, &model, c, opts, &method_stream(rep_stream, m))
                .map_err(|e| e.to_string())?;
            let mut runtime_ms = t0.elapsed().as_secs_f64() * 1e3;
            if !matches!(m, Method::Hulc | Method::Tstat) {
                runtime_ms += model_ms;
            }
            let ci = out.interval;
            Ok(RepRecord {
                point: ci.point,
                lower: ci.lower,
                upper: ci.upper,
                covered: ci.contains(target),
                skipped_draws: out.skipped_draws,
                runtime_ms,
            })
        })
        .collect()
}

fn run_cell(cfg: &ExperimentConfig, spec: &DgpSpec, methods: &[Method]) -> CellResult {
    let truth = ground_truth(spec);
    let opts = MethodOptions {
        alpha: cfg.alpha,
        n_boot: cfg.n_boot,
        tstat_batches: cfg.tstat_batches,
        weight_law: cfg.weight_law,
    };
    log::info!("cell {} ({} reps)", cell_key(spec), cfg.replications);
    let reps: Vec<RepOutcome> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let stream = replication_stream(cfg.master_seed, spec, r);
            run_replication(spec, truth.target, &truth.contrast, methods, &opts, &stream)
        })
        .collect();

    let methods = methods
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let mut records = Vec::with_capacity(reps.len());
            let mut first_err: Option<(usize, String)> = None;
            let mut failed = 0;
            for (r, outcome) in reps.iter().enumerate() {
                match &outcome[k] {
                    Ok(rec) => records.push(*rec),
                    Err(e) => {
                        failed += 1;
                        first_err.get_or_insert_with(|| (r, e.clone()));
                    }
                }
            }
            let outcome = match first_err {
                None => MethodOutcome::Done(records),
                Some((r, e)) => MethodOutcome::Failed {
                    failed_reps: failed,
                    reason: format!("rep {r}: {e}"),
                },
            };
            (m, outcome)
        })
        .collect();
    CellResult {
        spec: *spec,
        target: truth.target,
        methods,
    }
}

/// Runs every cell on the current rayon pool.
pub fn run_simulation(cfg: &ExperimentConfig) -> SimulationOutput {
    let methods = cfg.unique_methods();
    let cells = cfg
        .dgp
        .expand()
        .iter()
        .map(|spec| run_cell(cfg, spec, &methods))
        .collect();
    SimulationOutput {
        config: cfg.clone(),
        cells,
    }
}

fn cell_prefix(spec: &DgpSpec) -> String {
    format!(
        "{},{},{},{},{}",
        spec.kind.as_str(),
        spec.n,
        spec.d,
        spec.rho,
        spec.theta.as_str()
    )
}

pub fn coverage_csv(out: &SimulationOutput) -> String {
    let cfg = &out.config;
    let mut s = String::new();
    writeln!(s, "{COVERAGE_HEADER}").unwrap();
    for cell in &out.cells {
        for (m, outcome) in &cell.methods {
            let MethodOutcome::Done(records) = outcome else {
                continue;
            };
            let row = summarize(records);
            let runtime = if cfg.record_timing {
                row.mean_runtime_ms.to_string()
            } else {
                "NA".to_string()
            };
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                cell_prefix(&cell.spec),
                m,
                cfg.alpha,
                records.len(),
                cell.target,
                row.coverage,
                row.coverage_se,
                row.mean_width,
                row.width_se,
                runtime,
                cfg.master_seed
            )
            .unwrap();
        }
    }
    s
}

pub fn widths_csv(out: &SimulationOutput) -> String {
    let mut s = String::new();
    writeln!(s, "{WIDTHS_HEADER}").unwrap();
    for cell in &out.cells {
        let prefix = cell_prefix(&cell.spec);
        for (m, outcome) in &cell.methods {
            let MethodOutcome::Done(records) = outcome else {
                continue;
            };
            for (r, rec) in records.iter().enumerate() {
                writeln!(
                    s,
                    "{prefix},{m},{r},{},{},{},{},{},{}",
                    rec.point,
                    rec.lower,
                    rec.upper,
                    rec.width(),
                    u8::from(rec.covered),
                    rec.skipped_draws
                )
                .unwrap();
            }
        }
    }
    s
}

pub fn skipped_csv(out: &SimulationOutput) -> String {
    let mut s = String::new();
    writeln!(s, "{SKIPPED_HEADER}").unwrap();
    for cell in &out.cells {
        for (m, outcome) in &cell.methods {
            if let MethodOutcome::Failed { failed_reps, reason } = outcome {
                let reason = reason.replace('"', "'");
                writeln!(s, "{},{m},{failed_reps},\"{reason}\"", cell_prefix(&cell.spec)).unwrap();
            }
        }
    }
    s
}

/// One file per design and `n` (and per `rho`, `theta` for the cubic
/// design), rows in grid order.
pub fn plot_files(out: &SimulationOutput) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = Vec::new();
    for cell in &out.cells {
        let spec = &cell.spec;
        let name = match spec.kind {
            DgpKind::WellSpecified => format!("{}_n{}.csv", spec.kind.as_str(), spec.n),
            DgpKind::MisspecifiedCubic => {
                format!(
                    "{}_n{}_rho{}_{}.csv",
                    spec.kind.as_str(),
                    spec.n,
                    spec.rho,
                    spec.theta.as_str()
                )
            }
        };
        let idx = match files.iter().position(|(f, _)| *f == name) {
            Some(i) => i,
            None => {
                files.push((name, format!("{PLOT_HEADER}\n")));
                files.len() - 1
            }
        };
        for (m, outcome) in &cell.methods {
            if let MethodOutcome::Done(records) = outcome {
                let row = summarize(records);
                writeln!(files[idx].1, "{},{m},{},{}", spec.d, row.coverage, row.mean_width).unwrap();
            }
        }
    }
    files
}

pub fn write_outputs(out: &SimulationOutput, dir: &Path) -> Result<()> {
    write_file(&dir.join("coverage.csv"), &coverage_csv(out))?;
    write_file(&dir.join("widths.csv"), &widths_csv(out))?;
    write_file(&dir.join("skipped.csv"), &skipped_csv(out))?;
    let plot_dir = dir.join("plotdata");
    for (name, body) in plot_files(out) {
        write_file(&plot_dir.join(name), &body)?;
    }
    Ok(())
}

/// `leanreg simulate`: returns the output directory.
pub fn cmd_simulate(config_path: &Path, threads: Option<usize>, out_dir: Option<PathBuf>) -> Result<PathBuf> {
    let cfg = ExperimentConfig::load(config_path)?;
    if threads == Some(0) {
        return Err(CliError::Argument("--threads must be positive".into()));
    }
    let threads = threads.or(cfg.threads.count());
    let dir = out_dir.unwrap_or_else(|| cfg.out_dir.clone());
    let out = run_in_pool(threads, || run_simulation(&cfg))?;
    write_outputs(&out, &dir)?;
    Ok(dir)
}
