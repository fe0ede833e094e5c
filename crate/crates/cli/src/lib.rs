//! Experiment runner around `acco-core`: JSON configs, single runs with CSV
//! and manifest output, seed sweeps, verification suites and the memory
//! table.

pub mod config;
pub mod error;
pub mod output;
pub mod run;
pub mod sweep;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use run::{run_experiment, RunSummary};
pub use sweep::{sweep, SweepRow};
pub use verify::{run_suite, Suite, SuiteReport};

/// Environment variable naming the directory under which runs without an
/// explicit output directory are written.
pub const OUTPUT_ROOT_ENV: &str = "ACCO_SIM_OUT";
