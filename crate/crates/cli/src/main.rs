use std::path::PathBuf;
use std::process::ExitCode;

use acco_cli::sweep::sweep_csv;
use acco_cli::{run_experiment, run_suite, sweep, CliError, ExperimentConfig, Suite};
use acco_core::theory::{floor_gb, memory_model, MemoryMethod, MemoryQuery};
use anyhow::Context;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "acco-sim", version, about = "Simulate and verify overlapped data-parallel training protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metrics, timeline and manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the config's `output_dir`, else a
        /// directory under $ACCO_SIM_OUT or ./runs).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat an experiment over several seeds and aggregate loss curves.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a verification suite and print a JSON report.
    Verify {
        #[arg(long)]
        suite: String,
    },
    /// Per-replica memory for one method.
    Memory {
        #[arg(long)]
        method: String,
        #[arg(long)]
        k: f64,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        psi: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = cfg.resolve_output(out.as_deref());
            let summary = run_experiment(&cfg, &dir)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, seeds, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = sweep(&cfg, &seeds)?;
            let csv = sweep_csv(&rows, seeds.len());
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                    std::fs::write(dir.join("sweep.csv"), csv)?;
                    eprintln!("wrote {}", dir.join("sweep.csv").display());
                }
                None => print!("{csv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { suite } => {
            let suite: Suite = suite.parse()?;
            let report = run_suite(suite)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Memory { method, k, n, psi } => {
            let method: MemoryMethod = method.parse().map_err(|e: acco_core::Error| CliError::Config(e.to_string()))?;
            let bytes = memory_model(&MemoryQuery { method, k, workers: n, psi }).map_err(CliError::from)?;
            let report = serde_json::json!({
                "method": method,
                "k": k,
                "n": n,
                "psi": psi,
                "bytes": bytes,
                "gb_floor": floor_gb(bytes),
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
