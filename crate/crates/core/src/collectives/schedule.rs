//! Event-driven co-scheduling of compute and communication streams.
//!
//! Compute stage numbering (per worker, `T` = number of committed updates,
//! `W` = synchronous warmup rounds):
//!
//! - DDP: stage `t` holds the micro-batches of update `t`.
//! - DPU / WP: stages `< W` are synchronous. Stage `W` is the prologue that
//!   seeds the first delayed gradient; afterwards stage `t + 1` is computed
//!   while round `t` communicates. Update `t` consumes stage `t`; stage `T`
//!   is trailing work cut off by the end of the run.
//! - ACCO: stage 0 is the prologue estimate, stage `2t + 1` accumulates
//!   `g` at `θ_t` and stage `2t + 2` accumulates `g̃` at `θ̃_{t+1}`.
//!   Update `t` consumes stages `2t` and `2t + 1`; stage `2T` is trailing.
//!   A stage keeps issuing micro-batches until the matching collective has
//!   finished, so a worker never idles while communication is in flight.

use std::io::{self, Write};

use super::clock::{EventClock, ReadyFlags, Stream};
use super::cost::{CostModel, HeterogeneityProfile};
use crate::error::{Error, Result};
use crate::protocols::Protocol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamKind {
    Compute,
    Comm,
}

impl StreamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StreamKind::Compute => "compute",
            StreamKind::Comm => "comm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IntervalKind {
    /// Seeds the first delayed / estimate gradient.
    Prologue,
    /// Gradient micro-batches consumed by a later update.
    Gradient,
    /// ACCO gradients at the estimate `θ̃`.
    EstimateGradient,
    /// Micro-batches still running when the last update committed.
    Trailing,
    Idle,
    /// Gradient reduce-scatter, sharded step and parameter all-gather.
    Sync,
    /// ACCO stage-1 communication producing `θ̃`.
    EstimateUpdate,
    /// ACCO stage-2 communication producing `θ`.
    CommitUpdate,
}

impl IntervalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IntervalKind::Prologue => "prologue",
            IntervalKind::Gradient => "gradient",
            IntervalKind::EstimateGradient => "estimate_gradient",
            IntervalKind::Trailing => "trailing",
            IntervalKind::Idle => "idle",
            IntervalKind::Sync => "sync",
            IntervalKind::EstimateUpdate => "estimate_update",
            IntervalKind::CommitUpdate => "commit_update",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub worker: usize,
    pub stream: StreamKind,
    pub kind: IntervalKind,
    pub start: f64,
    pub end: f64,
    pub micro_batches: u32,
    pub bytes: f64,
}

/// Inputs of [`schedule_run`] that are not part of the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchedulePlan {
    pub protocol: Protocol,
    pub workers: usize,
    /// Parameter count, which sizes each collective.
    pub dim: usize,
    pub updates: usize,
    /// Micro-batches per worker per round (DDP/DPU/WP), or the minimum per
    /// stage (ACCO).
    pub accumulation: u32,
    /// Leading DDP-style rounds for DPU / WP.
    pub warmup_rounds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub protocol: Protocol,
    pub workers: usize,
    pub intervals: Vec<Interval>,
    /// `stages[j][i]`: micro-batches worker `i` completed in compute stage `j`
    /// (consumed stages only; see module docs for the numbering).
    pub stages: Vec<Vec<u32>>,
    /// Micro-batches per worker completed after the last consumed stage.
    pub trailing: Vec<u32>,
    /// Simulated time at which each update committed.
    pub commit_times: Vec<f64>,
    pub makespan: f64,
}

impl Timeline {
    /// Compute stages consumed by update `t`.
    pub fn stages_of_update(&self, t: usize) -> std::ops::Range<usize> {
        match self.protocol {
            Protocol::Acco => 2 * t..2 * t + 2,
            _ => t..t + 1,
        }
    }

    pub fn consumed_micro_batches(&self) -> u64 {
        self.stages.iter().flatten().map(|&m| u64::from(m)).sum()
    }

    pub fn issued_micro_batches(&self) -> u64 {
        self.consumed_micro_batches() + self.trailing.iter().map(|&m| u64::from(m)).sum::<u64>()
    }

    /// Samples whose gradients were computed per simulated second,
    /// counting every micro-batch completed before the run ended.
    pub fn samples_per_second(&self, batch_size: usize) -> f64 {
        if self.makespan <= 0.0 {
            return 0.0;
        }
        self.issued_micro_batches() as f64 * batch_size as f64 / self.makespan
    }

    /// Samples that reached a committed update per simulated second.
    pub fn consumed_samples_per_second(&self, batch_size: usize) -> f64 {
        if self.makespan <= 0.0 {
            return 0.0;
        }
        self.consumed_micro_batches() as f64 * batch_size as f64 / self.makespan
    }

    fn compute_overlap(&self, worker: usize, kind_filter: impl Fn(IntervalKind) -> bool, a: f64, b: f64) -> f64 {
        self.intervals
            .iter()
            .filter(|iv| iv.worker == worker && iv.stream == StreamKind::Compute && kind_filter(iv.kind))
            .map(|iv| (iv.end.min(b) - iv.start.max(a)).max(0.0))
            .fold(0.0, |acc, x| acc + x)
    }

    pub fn busy_time(&self, worker: usize) -> f64 {
        self.compute_overlap(worker, |k| k != IntervalKind::Idle, 0.0, self.makespan)
    }

    /// Fraction of `[a, b)` that worker's compute stream spent idle.
    pub fn idle_fraction_between(&self, worker: usize, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        self.compute_overlap(worker, |k| k == IntervalKind::Idle, a, b) / (b - a)
    }

    /// Idle fraction of a worker's compute stream over the whole run.
    pub fn idle_fraction(&self, worker: usize) -> f64 {
        self.idle_fraction_between(worker, 0.0, self.makespan)
    }

    pub const CSV_HEADER: &'static str = "worker_id,stream,event_kind,t_start,t_end,micro_batches,bytes";

    /// CSV export with a header row, LF line endings and 17 significant
    /// digits for floats.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for iv in &self.intervals {
            writeln!(
                out,
                "{},{},{},{:.16e},{:.16e},{},{:.16e}",
                iv.worker,
                iv.stream.as_str(),
                iv.kind.as_str(),
                iv.start,
                iv.end,
                iv.micro_batches,
                iv.bytes
            )?;
        }
        Ok(())
    }
}

#[derive(Debug)]
enum Action {
    MicroBatchDone(usize),
    CollectiveDone(usize),
}

struct WorkerCursor {
    stage: usize,
    stage_start: f64,
    micro_batches: u32,
    computing: bool,
}

struct Engine {
    plan: SchedulePlan,
    tau: Vec<f64>,
    comm_time: f64,
    comm_bytes: f64,
    clock: EventClock<Action>,
    cursors: Vec<WorkerCursor>,
    intervals: Vec<Interval>,
    stages: Vec<Vec<u32>>,
    finished: Vec<usize>,
    comm_done: Vec<bool>,
    commit_times: Vec<f64>,
}

impl Engine {
    fn new(plan: SchedulePlan, profile: &HeterogeneityProfile, model: &CostModel, stage_count: usize, comm_count: usize) -> Self {
        Engine {
            plan,
            tau: (0..plan.workers).map(|i| profile.micro_batch_time(i)).collect(),
            comm_time: model.sync_time(plan.dim, plan.workers),
            comm_bytes: model.sync_bytes(plan.dim, plan.workers),
            clock: EventClock::new(plan.workers),
            cursors: (0..plan.workers)
                .map(|_| WorkerCursor { stage: 0, stage_start: 0.0, micro_batches: 0, computing: false })
                .collect(),
            intervals: Vec::new(),
            stages: vec![vec![0; plan.workers]; stage_count],
            finished: vec![0; stage_count + 1],
            comm_done: vec![false; comm_count],
            commit_times: Vec::with_capacity(plan.updates),
        }
    }

    fn start_stage(&mut self, worker: usize, stage: usize) -> Result<()> {
        let now = self.clock.now();
        let c = &mut self.cursors[worker];
        c.stage = stage;
        c.stage_start = now;
        c.micro_batches = 0;
        c.computing = true;
        self.clock.schedule(now + self.tau[worker], Stream::Compute(worker), Action::MicroBatchDone(worker))
    }

    fn close_stage(&mut self, worker: usize, kind: IntervalKind) {
        let now = self.clock.now();
        let c = &mut self.cursors[worker];
        c.computing = false;
        self.intervals.push(Interval {
            worker,
            stream: StreamKind::Compute,
            kind,
            start: c.stage_start,
            end: now,
            micro_batches: c.micro_batches,
            bytes: 0.0,
        });
        if c.stage < self.stages.len() {
            self.stages[c.stage][worker] = c.micro_batches;
        }
        self.finished[c.stage] += 1;
    }

    fn start_comm(&mut self, index: usize, kind: IntervalKind) -> Result<()> {
        let now = self.clock.now();
        let end = now + self.comm_time;
        for worker in 0..self.plan.workers {
            self.intervals.push(Interval {
                worker,
                stream: StreamKind::Comm,
                kind,
                start: now,
                end,
                micro_batches: 0,
                bytes: self.comm_bytes,
            });
        }
        self.clock.schedule(end, Stream::Comm(0), Action::CollectiveDone(index))
    }

    fn deadlock(&self) -> Error {
        let state: Vec<String> = self
            .cursors
            .iter()
            .enumerate()
            .map(|(i, c)| format!("w{i}: stage {} mb {} computing {}", c.stage, c.micro_batches, c.computing))
            .collect();
        Error::Deadlock {
            time: self.clock.now(),
            state: format!("{} (commits {}/{})", state.join("; "), self.commit_times.len(), self.plan.updates),
        }
    }

    /// Cuts off in-flight compute at the final commit and fills idle gaps.
    /// Micro-batches finishing at the same instant as the final commit
    /// still count as completed.
    fn finish(mut self, trailing_stage: Option<usize>) -> Timeline {
        let makespan = self.clock.now();
        while self.clock.peek_time() == Some(makespan) {
            if let Some((_, _, Action::MicroBatchDone(w))) = self.clock.pop() {
                if self.cursors[w].computing {
                    self.cursors[w].micro_batches += 1;
                }
            }
        }
        let mut trailing = vec![0; self.plan.workers];
        for (worker, (c, slot)) in self.cursors.iter().zip(trailing.iter_mut()).enumerate() {
            if c.computing && Some(c.stage) == trailing_stage {
                *slot = c.micro_batches;
                self.intervals.push(Interval {
                    worker,
                    stream: StreamKind::Compute,
                    kind: IntervalKind::Trailing,
                    start: c.stage_start,
                    end: makespan,
                    micro_batches: c.micro_batches,
                    bytes: 0.0,
                });
            }
        }
        let mut idle = Vec::new();
        for worker in 0..self.plan.workers {
            let mut busy: Vec<(f64, f64)> = self
                .intervals
                .iter()
                .filter(|iv| iv.worker == worker && iv.stream == StreamKind::Compute)
                .map(|iv| (iv.start, iv.end))
                .collect();
            busy.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut cursor = 0.0;
            for (s, e) in busy.into_iter().chain(std::iter::once((makespan, makespan))) {
                if s > cursor {
                    idle.push(Interval {
                        worker,
                        stream: StreamKind::Compute,
                        kind: IntervalKind::Idle,
                        start: cursor,
                        end: s,
                        micro_batches: 0,
                        bytes: 0.0,
                    });
                }
                cursor = cursor.max(e);
            }
        }
        self.intervals.extend(idle);
        self.intervals.sort_by(|a, b| {
            a.start
                .total_cmp(&b.start)
                .then(a.worker.cmp(&b.worker))
                .then((a.stream == StreamKind::Compute).cmp(&(b.stream == StreamKind::Compute)))
        });
        Timeline {
            protocol: self.plan.protocol,
            workers: self.plan.workers,
            intervals: self.intervals,
            stages: self.stages,
            trailing,
            commit_times: self.commit_times,
            makespan,
        }
    }
}

/// Advances an event clock through `plan.updates` committed updates and
/// returns the per-stream activity log.
pub fn schedule_run(plan: SchedulePlan, profile: &HeterogeneityProfile, model: &CostModel) -> Result<Timeline> {
    if plan.workers == 0 || plan.dim == 0 || plan.updates == 0 || plan.accumulation == 0 {
        return Err(Error::InvalidConfig(
            "schedule needs workers, dim, updates and accumulation all >= 1".into(),
        ));
    }
    profile.validate(plan.workers)?;
    model.validate()?;
    match plan.protocol {
        Protocol::Acco => schedule_acco(plan, profile, model),
        Protocol::Ddp => schedule_rounds(SchedulePlan { warmup_rounds: plan.updates, ..plan }, profile, model),
        Protocol::Dpu | Protocol::Wp => schedule_rounds(plan, profile, model),
    }
}

/// Rounds with a fixed number of micro-batches per worker. Round `t < W`
/// is synchronous (compute, then communicate); later rounds communicate
/// update `t` while computing the gradient for `t + 1`.
fn schedule_rounds(plan: SchedulePlan, profile: &HeterogeneityProfile, model: &CostModel) -> Result<Timeline> {
    let t_total = plan.updates;
    let warm = plan.warmup_rounds.min(t_total);
    let overlapped = warm < t_total;
    let mut eng = Engine::new(plan, profile, model, t_total, t_total);
    let kind_of = |stage: usize| {
        if overlapped && stage == warm {
            IntervalKind::Prologue
        } else {
            IntervalKind::Gradient
        }
    };
    for w in 0..plan.workers {
        eng.start_stage(w, 0)?;
    }
    let mut next_round = 0usize;
    loop {
        let Some((_, _, action)) = eng.clock.pop() else {
            return Err(eng.deadlock());
        };
        match action {
            Action::MicroBatchDone(w) => {
                let now = eng.clock.now();
                eng.cursors[w].micro_batches += 1;
                if eng.cursors[w].micro_batches < plan.accumulation {
                    eng.clock.schedule(now + eng.tau[w], Stream::Compute(w), Action::MicroBatchDone(w))?;
                    continue;
                }
                let stage = eng.cursors[w].stage;
                if stage >= t_total {
                    // trailing stage ran to completion before the last commit
                    let c = &mut eng.cursors[w];
                    c.computing = false;
                    eng.intervals.push(Interval {
                        worker: w,
                        stream: StreamKind::Compute,
                        kind: IntervalKind::Trailing,
                        start: c.stage_start,
                        end: now,
                        micro_batches: c.micro_batches,
                        bytes: 0.0,
                    });
                    continue;
                }
                eng.close_stage(w, kind_of(stage));
            }
            Action::CollectiveDone(r) => {
                eng.comm_done[r] = true;
                eng.commit_times.push(eng.clock.now());
                if r + 1 == t_total {
                    let trailing: Vec<u32> = eng
                        .cursors
                        .iter()
                        .map(|c| if !c.computing && c.stage >= t_total { c.micro_batches } else { 0 })
                        .collect();
                    let mut tl = eng.finish(overlapped.then_some(t_total));
                    for (dst, done) in tl.trailing.iter_mut().zip(trailing) {
                        *dst += done;
                    }
                    return Ok(tl);
                }
                if r < warm {
                    for w in 0..plan.workers {
                        eng.start_stage(w, r + 1)?;
                    }
                }
            }
        }
        // start every round whose inputs are ready
        while next_round < t_total
            && eng.finished[next_round] == plan.workers
            && (next_round == 0 || eng.comm_done[next_round - 1])
        {
            eng.start_comm(next_round, IntervalKind::Sync)?;
            if next_round >= warm {
                for w in 0..plan.workers {
                    eng.start_stage(w, next_round + 1)?;
                }
            }
            next_round += 1;
        }
    }
}

/// ACCO: each worker's compute stream keeps accumulating until the
/// collective of its current stage finishes (and it has at least
/// `accumulation` micro-batches), then hands its accumulator to the
/// communication stream and starts the next stage immediately.
///
/// All events sharing a timestamp are applied before any worker decides
/// whether to hand off, so a collective that ends exactly when a
/// micro-batch does is always seen first.
fn schedule_acco(plan: SchedulePlan, profile: &HeterogeneityProfile, model: &CostModel) -> Result<Timeline> {
    let t_total = plan.updates;
    let last_comm = 2 * t_total;
    let mut eng = Engine::new(plan, profile, model, 2 * t_total, last_comm + 1);
    eng.clock.set_all(ReadyFlags::default());
    let kind_of = |stage: usize| match stage {
        0 => IntervalKind::Prologue,
        s if s % 2 == 1 => IntervalKind::Gradient,
        _ => IntervalKind::EstimateGradient,
    };
    for w in 0..plan.workers {
        eng.start_stage(w, 0)?;
    }
    let mut undecided: Vec<usize> = Vec::new();
    loop {
        let Some((_, _, action)) = eng.clock.pop() else {
            return Err(eng.deadlock());
        };
        let now = eng.clock.now();
        match action {
            Action::MicroBatchDone(w) => {
                eng.cursors[w].micro_batches += 1;
                undecided.push(w);
            }
            Action::CollectiveDone(j) => {
                eng.comm_done[j] = true;
                let flags = if j % 2 == 1 {
                    ReadyFlags { ready_for_stage_1: false, ready_for_stage_2: true }
                } else {
                    eng.commit_times.push(now);
                    ReadyFlags { ready_for_stage_1: true, ready_for_stage_2: false }
                };
                eng.clock.set_all(flags);
                if j == last_comm {
                    return Ok(eng.finish(Some(last_comm)));
                }
            }
        }
        if eng.clock.peek_time() == Some(now) {
            continue;
        }
        let mut waiting = Vec::new();
        undecided.sort_unstable();
        for w in std::mem::take(&mut undecided) {
            let stage = eng.cursors[w].stage;
            let flags = eng.clock.flags(w);
            let released = match stage {
                0 => true,
                s if s % 2 == 1 => flags.ready_for_stage_2,
                _ => flags.ready_for_stage_1,
            };
            if !released || eng.cursors[w].micro_batches < plan.accumulation || stage >= last_comm {
                waiting.push(w);
                continue;
            }
            eng.close_stage(w, kind_of(stage));
            eng.start_stage(w, stage + 1)?;
            if eng.finished[stage] == plan.workers {
                let comm = stage + 1;
                let kind = if comm % 2 == 1 { IntervalKind::EstimateUpdate } else { IntervalKind::CommitUpdate };
                eng.clock.set_all(ReadyFlags::default());
                eng.start_comm(comm, kind)?;
            }
        }
        if eng.clock.peek_time() == Some(now) {
            // an instantaneous collective was just launched; revisit after it lands
            undecided = waiting;
        } else {
            for w in waiting {
                eng.clock.schedule(now + eng.tau[w], Stream::Compute(w), Action::MicroBatchDone(w))?;
            }
        }
    }
}
