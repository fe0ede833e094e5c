use acco_core::run_protocol;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub update: usize,
    pub mean_loss: f64,
    /// Population standard deviation across seeds.
    pub std_loss: f64,
    pub mean_sim_time_s: f64,
}

pub const SWEEP_HEADER: &str = "update,mean_loss,std_loss,mean_sim_time_s,n_seeds";

/// Runs the experiment once per seed (in parallel) and aggregates the loss
/// curves in seed order.
pub fn sweep(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<SweepRow>, CliError> {
    if seeds.is_empty() {
        return Err(CliError::Config("sweep needs at least one seed".into()));
    }
    cfg.validate()?;
    let problem = cfg.problem.build()?;
    let theta0 = cfg.init.materialize(problem.dim())?;
    let runs: Vec<Result<Vec<(f64, f64)>, CliError>> = seeds
        .par_iter()
        .map(|&seed| {
            let sim = acco_core::SimConfig { master_seed: seed, ..cfg.sim() };
            let trace = run_protocol(cfg.method_name, &problem, &cfg.optimizer, &sim, &theta0, cfg.t_updates)?;
            Ok(trace.records.iter().map(|r| (r.loss, r.time)).collect())
        })
        .collect();
    let runs: Vec<Vec<(f64, f64)>> = runs.into_iter().collect::<Result<_, _>>()?;
    aggregate(&runs)
}

pub fn aggregate(runs: &[Vec<(f64, f64)>]) -> Result<Vec<SweepRow>, CliError> {
    let len = runs.first().map_or(0, Vec::len);
    if let Some(bad) = runs.iter().position(|r| r.len() != len) {
        return Err(CliError::Config(format!(
            "seed #{bad} produced {} rows, expected {len}",
            runs[bad].len()
        )));
    }
    Ok((0..len)
        .map(|t| {
            let (mean, var) = mean_var(runs.iter().map(|r| r[t].0));
            SweepRow {
                update: t,
                mean_loss: mean,
                std_loss: var.sqrt(),
                mean_sim_time_s: mean_var(runs.iter().map(|r| r[t].1)).0,
            }
        })
        .collect())
}

/// Welford running mean and population variance. Identical inputs give
/// their exact value back and a variance of zero.
fn mean_var(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for x in xs {
        n += 1.0;
        let delta = x - mean;
        mean += delta / n;
        m2 += delta * (x - mean);
    }
    if n == 0.0 {
        (0.0, 0.0)
    } else {
        (mean, m2 / n)
    }
}

pub fn sweep_csv(rows: &[SweepRow], seeds: usize) -> String {
    use crate::output::fmt_f64;
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{seeds}\n",
            r.update,
            fmt_f64(r.mean_loss),
            fmt_f64(r.std_loss),
            fmt_f64(r.mean_sim_time_s)
        ));
    }
    s
}
