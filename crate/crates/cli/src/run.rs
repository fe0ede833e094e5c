use std::path::{Path, PathBuf};

use acco_core::{run_protocol, Error as SimError, RunTrace};
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{write_metrics, write_timeline};

pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMELINE_FILE: &str = "timeline.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub updates: usize,
    pub final_loss: f64,
    pub makespan_s: f64,
    pub samples_per_second: f64,
    pub config_sha256: String,
}

/// Runs one experiment and writes `metrics.csv`, `timeline.csv` and
/// `manifest.json` into `out_dir`. A diverged run still writes everything
/// recorded before the failure.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let problem = cfg.problem.build()?;
    let theta0 = cfg.init.materialize(problem.dim())?;
    let sim = acco_core::SimConfig { record_trajectory: true, ..cfg.sim() };
    std::fs::create_dir_all(out_dir)?;

    let outcome = run_protocol(cfg.method_name, &problem, &cfg.optimizer, &sim, &theta0, cfg.t_updates);
    let (trace, failure) = match outcome {
        Ok(trace) => (trace, None),
        Err(SimError::Diverged { update, loss, partial }) => (*partial, Some((update, loss))),
        Err(e) => return Err(e.into()),
    };
    write_metrics(&out_dir.join(METRICS_FILE), &trace, &problem, cfg.optimizer.learning_rate)?;
    write_timeline(&out_dir.join(TIMELINE_FILE), &trace)?;
    write_manifest(&out_dir.join(MANIFEST_FILE), cfg, &trace, failure)?;

    if let Some((update, loss)) = failure {
        return Err(CliError::Diverged { update, loss, dir: out_dir.display().to_string() });
    }
    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        updates: trace.records.len(),
        final_loss: trace.final_loss(),
        makespan_s: trace.timeline.makespan,
        samples_per_second: trace.timeline.samples_per_second(cfg.batch_size),
        config_sha256: cfg.hash(),
    })
}

fn write_manifest(
    path: &Path,
    cfg: &ExperimentConfig,
    trace: &RunTrace,
    failure: Option<(usize, f64)>,
) -> Result<(), CliError> {
    let status = match failure {
        None => json!({ "state": "completed" }),
        Some((update, loss)) => json!({
            "state": "diverged",
            "update": update,
            "loss": if loss.is_finite() { json!(loss) } else { json!(loss.to_string()) },
        }),
    };
    let manifest = json!({
        "tool": "acco-sim",
        "version": env!("CARGO_PKG_VERSION"),
        "core_version": acco_core::VERSION,
        "config_sha256": cfg.hash(),
        "master_seed": cfg.master_seed,
        "method_name": cfg.method_name,
        "status": status,
        "committed_updates": trace.records.len(),
        "makespan_s": trace.timeline.makespan,
        "files": [METRICS_FILE, TIMELINE_FILE],
        "config": serde_json::from_str::<serde_json::Value>(&cfg.canonical_json())?,
    });
    std::fs::write(path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}
