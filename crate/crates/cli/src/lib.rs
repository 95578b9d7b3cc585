//! Command-line harness for `leanreg-core`: Monte Carlo coverage
//! experiments, fitting on CSV data, and concentration diagnostics.

pub mod config;
pub mod data;
pub mod diagnose;
pub mod error;
pub mod fit;
pub mod methods;
pub mod output;
pub mod simulate;

pub use config::{DiagnoseConfig, ExperimentConfig, Method, Threads};
pub use data::{parse_contrast, parse_data_csv};
pub use diagnose::{cmd_diagnose, run_diagnose};
pub use error::{CliError, Result};
pub use fit::{cmd_fit, FitArgs, FitReport};
pub use simulate::{cmd_simulate, run_simulation, SimulationOutput};
