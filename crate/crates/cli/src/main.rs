use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use leanreg_cli::fit::FIT_HEADER;
use leanreg_cli::{cmd_diagnose, cmd_fit, cmd_simulate, CliError, FitArgs, Method};
use leanreg_core::WeightLaw;

#[derive(Parser)]
#[command(name = "leanreg", version, about = "Assumption-lean linear regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a coverage experiment and write coverage.csv, widths.csv and plotdata/.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides `out_dir` from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Confidence interval for a contrast on a CSV data set (header y,x1,...,xd).
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// `coord:k` (1-based) or `file:<path>`.
        #[arg(long)]
        contrast: String,
        #[arg(long, default_value = "wald", value_parser = parse_method)]
        method: Method,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        n_boot: usize,
        #[arg(long, default_value_t = 6)]
        tstat_batches: usize,
        #[arg(long)]
        gaussian_weights: bool,
        /// Print the column names before the result row.
        #[arg(long)]
        header: bool,
    },
    /// Write concentration.csv and bias_scaling.csv.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| format!("unknown method {s:?}; expected wald, wald_ols, hulc, tstat, wild or pairs"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            config,
            threads,
            out_dir,
        } => {
            let dir = cmd_simulate(&config, threads, out_dir)?;
            log::info!("wrote results to {}", dir.display());
        }
        Command::Fit {
            data,
            contrast,
            method,
            alpha,
            seed,
            n_boot,
            tstat_batches,
            gaussian_weights,
            header,
        } => {
            let args = FitArgs {
                data,
                contrast,
                method,
                alpha,
                seed,
                n_boot,
                tstat_batches,
                weight_law: if gaussian_weights {
                    WeightLaw::StandardNormal
                } else {
                    WeightLaw::MammenTwoPoint
                },
            };
            let report = cmd_fit(&args)?;
            if header {
                println!("{FIT_HEADER}");
            }
            println!("{}", report.csv_row());
        }
        Command::Diagnose {
            config,
            threads,
            out_dir,
        } => {
            let dir = cmd_diagnose(&config, threads, out_dir)?;
            log::info!("wrote results to {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
