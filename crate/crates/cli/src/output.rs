//! CSV and manifest writers. Floats carry 17 significant digits so every
//! value parses back to the same `f64`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use acco_core::{Problem, RunTrace};
use acco_core::theory::{lyapunov, LyapunovParams};

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn metrics_header(workers: usize) -> String {
    let mut cols = vec![
        "update".to_string(),
        "sim_time_s".into(),
        "samples".into(),
        "train_loss".into(),
        "grad_norm_sq".into(),
        "lyapunov".into(),
    ];
    cols.extend((0..workers).map(|w| format!("idle_w{w}")));
    cols.join(",")
}

/// One row per committed update. The Lyapunov column is `NaN` when the
/// problem's optimum is unknown; idle fractions cover the interval since
/// the previous commit.
pub fn write_metrics(path: &Path, trace: &RunTrace, problem: &Problem, eta: f64) -> std::io::Result<()> {
    let workers = trace.timeline.workers;
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", metrics_header(workers))?;
    let params = LyapunovParams::for_problem(problem, eta).ok();
    let mut prev = 0.0;
    for (i, r) in trace.records.iter().enumerate() {
        let v = match (&params, &trace.trajectory) {
            (Some(p), Some(tr)) => {
                let (theta, tilde) = &tr[i + 1];
                lyapunov(theta, tilde, problem, p).unwrap_or(f64::NAN)
            }
            _ => f64::NAN,
        };
        let mut row = vec![
            r.update.to_string(),
            fmt_f64(r.time),
            r.samples.to_string(),
            fmt_f64(r.loss),
            fmt_f64(r.grad_norm_sq),
            fmt_f64(v),
        ];
        for w in 0..workers {
            row.push(fmt_f64(trace.timeline.idle_fraction_between(w, prev, r.time)));
        }
        prev = r.time;
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()
}

pub fn write_timeline(path: &Path, trace: &RunTrace) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    trace.timeline.write_csv(&mut out)?;
    out.flush()
}
