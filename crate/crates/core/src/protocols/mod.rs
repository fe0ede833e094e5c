//! The four data-parallel update protocols as explicit state machines over
//! simulated workers.
//!
//! [`run_protocol`] first asks the scheduler how many micro-batches each
//! worker completes in every compute stage, then replays those stages
//! numerically on a [`Cluster`]. Gradients are always combined by sample
//! count, so workers contributing more micro-batches weigh more.

mod cluster;

use serde::{Deserialize, Serialize};

pub use cluster::{Buffer, Cluster, Stage};

use crate::collectives::{schedule_run, CostModel, HeterogeneityProfile, SchedulePlan, Timeline};
use crate::error::{Error, Result};
use crate::optim::OptimizerConfig;
use crate::problems::{GradResult, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Ddp,
    Dpu,
    Wp,
    Acco,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::Ddp, Protocol::Dpu, Protocol::Wp, Protocol::Acco];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Ddp => "ddp",
            Protocol::Dpu => "dpu",
            Protocol::Wp => "wp",
            Protocol::Acco => "acco",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// One worker's view of the training state.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerState {
    pub theta: Vec<f64>,
    pub theta_tilde: Vec<f64>,
    /// Sum of `size · gradient` over the micro-batches of the current stage.
    pub acc_g: Vec<f64>,
    pub acc_count: u64,
    pub acc_g_tilde: Vec<f64>,
    pub acc_count_tilde: u64,
    /// Handoff slot between the compute and communication streams.
    pub buffer: Buffer,
    pub stage: Stage,
    /// DPU/WP: gradient at `θ̃` waiting to be applied next round.
    pub pending_delayed_grad: Option<(u64, Vec<f64>)>,
    /// ACCO: the communication stream's copy of the last estimate
    /// accumulator, reused by the full commit.
    pub comm_tilde: Option<(u64, Vec<f64>)>,
}

impl WorkerState {
    pub fn new(theta0: &[f64]) -> Self {
        let d = theta0.len();
        WorkerState {
            theta: theta0.to_vec(),
            theta_tilde: theta0.to_vec(),
            acc_g: vec![0.0; d],
            acc_count: 0,
            acc_g_tilde: vec![0.0; d],
            acc_count_tilde: 0,
            buffer: Buffer::Empty,
            stage: Stage::Stage1,
            pending_delayed_grad: None,
            comm_tilde: None,
        }
    }
}

/// What the optimizer consumed in one update next to what the workers
/// logged, for conservation checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Contribution {
    /// `Σᵢ Nᵢ·gᵢ` rebuilt from worker accumulators.
    pub logged_sum: Vec<f64>,
    pub logged_count: u64,
    /// The averaged gradient handed to the sharded optimizer.
    pub applied: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub update: usize,
    /// Simulated time at which the update committed.
    pub time: f64,
    /// `f(θ_{t+1})`.
    pub loss: f64,
    pub grad_norm_sq: f64,
    pub grad_norm_sq_tilde: f64,
    /// Cumulative samples consumed up to and including this update.
    pub samples: u64,
    /// Micro-batches each worker contributed to this update.
    pub micro_batches: Vec<u32>,
    pub contribution: Option<Contribution>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub protocol: Protocol,
    pub records: Vec<RoundRecord>,
    pub initial_loss: f64,
    /// `(θ_t, θ̃_t)` for `t = 0..=T` when requested.
    pub trajectory: Option<Vec<(Vec<f64>, Vec<f64>)>>,
    pub timeline: Timeline,
    pub final_theta: Vec<f64>,
    pub final_theta_tilde: Vec<f64>,
}

impl RunTrace {
    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(self.initial_loss, |r| r.loss)
    }

    pub fn thetas(&self) -> Option<Vec<&[f64]>> {
        self.trajectory
            .as_ref()
            .map(|tr| tr.iter().map(|(t, _)| t.as_slice()).collect())
    }
}

/// Simulation knobs that are not optimizer or problem settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_workers: usize,
    /// Samples per micro-batch.
    pub batch_size: usize,
    /// Micro-batches per worker per round; the per-stage minimum for ACCO.
    pub n_grad_accumulation: u32,
    /// DPU/WP rounds run with DDP semantics before delays start.
    pub warmup_rounds: usize,
    /// Use exact gradients instead of sampled micro-batches.
    pub full_batch: bool,
    pub master_seed: u64,
    pub cost: CostModel,
    pub profile: HeterogeneityProfile,
    /// Keep `(θ_t, θ̃_t)` and per-update gradient bookkeeping.
    pub record_trajectory: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_workers: 1,
            batch_size: 1,
            n_grad_accumulation: 1,
            warmup_rounds: 0,
            full_batch: false,
            master_seed: 0,
            cost: CostModel::free(),
            profile: HeterogeneityProfile::homogeneous(1.0),
            record_trajectory: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_workers == 0 {
            return Err(Error::InvalidConfig("n_workers must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.n_grad_accumulation == 0 {
            return Err(Error::InvalidConfig("n_grad_accumulation must be >= 1".into()));
        }
        self.cost.validate()?;
        self.profile.validate(self.n_workers)
    }
}

/// `(Σᵢ Nᵢ·gᵢ) / Σᵢ Nᵢ` where `gᵢ` is the mean gradient of bundle `i`.
pub fn weighted_average(bundles: &[GradResult]) -> Result<Vec<f64>> {
    let first = bundles
        .first()
        .ok_or_else(|| Error::InvalidConfig("weighted_average of no bundles".into()))?;
    let d = first.gradient.len();
    let mut sum = vec![0.0; d];
    let mut total = 0u64;
    for b in bundles {
        if b.gradient.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: b.gradient.len() });
        }
        total += b.sample_count;
        crate::linalg::axpy(b.sample_count as f64, &b.gradient, &mut sum);
    }
    if total == 0 {
        return Err(Error::EmptyBatch);
    }
    crate::linalg::scale(1.0 / total as f64, &mut sum);
    Ok(sum)
}

/// Runs `updates` committed updates of `protocol` from `theta0`.
///
/// A non-finite loss or parameter stops the run with [`Error::Diverged`]
/// carrying everything recorded so far.
pub fn run_protocol(
    protocol: Protocol,
    problem: &Problem,
    opt: &OptimizerConfig,
    sim: &SimConfig,
    theta0: &[f64],
    updates: usize,
) -> Result<RunTrace> {
    if updates == 0 {
        return Err(Error::InvalidConfig("T_updates must be >= 1".into()));
    }
    sim.validate()?;
    opt.validate()?;
    if theta0.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: theta0.len() });
    }
    let plan = SchedulePlan {
        protocol,
        workers: sim.n_workers,
        dim: problem.dim(),
        updates,
        accumulation: sim.n_grad_accumulation,
        warmup_rounds: sim.warmup_rounds,
    };
    let timeline = schedule_run(plan, &sim.profile, &sim.cost)?;
    let mut cluster = Cluster::new(problem, *opt, sim, theta0)?;

    let (initial_loss, _) = problem.value_and_grad(theta0)?;
    let mut trace = RunTrace {
        protocol,
        records: Vec::with_capacity(updates),
        initial_loss,
        trajectory: sim.record_trajectory.then(|| vec![(theta0.to_vec(), theta0.to_vec())]),
        timeline,
        final_theta: theta0.to_vec(),
        final_theta_tilde: theta0.to_vec(),
    };
    let stages = trace.timeline.stages.clone();
    let warm = sim.warmup_rounds.min(updates);
    let mut samples = 0u64;

    for t in 0..updates {
        let outcome = match protocol {
            Protocol::Ddp => cluster.ddp_round(t, &stages[t]),
            Protocol::Dpu | Protocol::Wp if t < warm => cluster.ddp_round(t, &stages[t]),
            Protocol::Dpu | Protocol::Wp => {
                if t == warm {
                    cluster.seed_delayed(t, &stages[t])?;
                }
                let next = stages.get(t + 1).map(Vec::as_slice);
                if protocol == Protocol::Dpu {
                    cluster.dpu_round(t, next)
                } else {
                    cluster.wp_round(t, next)
                }
            }
            Protocol::Acco => {
                if t == 0 {
                    cluster.acco_prologue(&stages[0])?;
                }
                cluster.acco_stage1(2 * t + 1, &stages[2 * t + 1])?;
                cluster.acco_commit_estimate()?;
                cluster.acco_handoff_stage1()?;
                if let Some(counts) = stages.get(2 * t + 2) {
                    cluster.acco_stage2(2 * t + 2, counts)?;
                }
                let c = cluster.acco_commit_full();
                if c.is_ok() {
                    cluster.acco_handoff_stage2()?;
                }
                c
            }
        };
        let contribution = match outcome {
            Ok(c) => c,
            Err(Error::NonFinite(_)) => return Err(diverged(trace, t, f64::NAN)),
            Err(e) => return Err(e),
        };
        cluster.check_replicas()?;
        let (theta, theta_tilde) = cluster.params();
        if !crate::linalg::all_finite(theta) || !crate::linalg::all_finite(theta_tilde) {
            return Err(diverged(trace, t, f64::NAN));
        }
        let (loss, grad) = problem.value_and_grad(theta)?;
        if !loss.is_finite() {
            return Err(diverged(trace, t, loss));
        }
        let grad_norm_sq_tilde = problem.grad_norm_sq(theta_tilde)?;

        let mut micro_batches = vec![0u32; sim.n_workers];
        for s in trace.timeline.stages_of_update(t) {
            for (m, &c) in micro_batches.iter_mut().zip(&stages[s]) {
                *m += c;
            }
        }
        samples += micro_batches.iter().map(|&m| u64::from(m)).sum::<u64>() * sim.batch_size as u64;

        trace.final_theta = theta.to_vec();
        trace.final_theta_tilde = theta_tilde.to_vec();
        if let Some(tr) = trace.trajectory.as_mut() {
            tr.push((theta.to_vec(), theta_tilde.to_vec()));
        }
        trace.records.push(RoundRecord {
            update: t,
            time: trace.timeline.commit_times[t],
            loss,
            grad_norm_sq: crate::linalg::norm_sq(&grad),
            grad_norm_sq_tilde,
            samples,
            micro_batches,
            contribution: sim.record_trajectory.then_some(contribution),
        });
    }
    Ok(trace)
}

fn diverged(trace: RunTrace, update: usize, loss: f64) -> Error {
    Error::Diverged { update, loss, partial: Box::new(trace) }
}
