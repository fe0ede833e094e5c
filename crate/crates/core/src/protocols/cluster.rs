use super::{Contribution, SimConfig, WorkerState};
use crate::collectives::Fabric;
use crate::error::{Error, Result};
use crate::linalg;
use crate::optim::{shard_partition, sharded_opt_step, OptimizerConfig, OptimizerState, ShardLayout};
use crate::problems::{MicroBatch, Problem};
use crate::seed::micro_batch_seed;

/// Contents of the compute/communication handoff slot.
#[derive(Debug, Clone, PartialEq)]
pub enum Buffer {
    Empty,
    /// Accumulated `(count, Σ size·gradient)` from the compute stream.
    Grads { count: u64, sum: Vec<f64> },
    /// Parameters all-gathered by the communication stream.
    Params(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Stage1,
    Stage2,
}

#[derive(Debug, Clone, Copy)]
enum At {
    Theta,
    Tilde,
}

/// Simulated workers sharing a ZeRO-1 sharded optimizer: worker `i` owns
/// the optimizer state of `layout.range(i)`.
pub struct Cluster<'p> {
    problem: &'p Problem,
    cfg: OptimizerConfig,
    layout: ShardLayout,
    states: Vec<OptimizerState>,
    fabric: Fabric,
    workers: Vec<WorkerState>,
    batch_size: usize,
    full_batch: bool,
    master_seed: u64,
}

impl<'p> Cluster<'p> {
    pub fn new(problem: &'p Problem, cfg: OptimizerConfig, sim: &SimConfig, theta0: &[f64]) -> Result<Self> {
        if theta0.len() != problem.dim() {
            return Err(Error::DimensionMismatch { expected: problem.dim(), got: theta0.len() });
        }
        let layout = shard_partition(problem.dim(), sim.n_workers)?;
        let states = layout.states(&cfg);
        Ok(Cluster {
            problem,
            cfg,
            layout,
            states,
            fabric: Fabric::new(sim.n_workers),
            workers: (0..sim.n_workers).map(|_| WorkerState::new(theta0)).collect(),
            batch_size: sim.batch_size,
            full_batch: sim.full_batch,
            master_seed: sim.master_seed,
        })
    }

    pub fn workers(&self) -> &[WorkerState] {
        &self.workers
    }

    pub fn fabric(&self) -> &Fabric {
        &self.fabric
    }

    pub fn optimizer_states(&self) -> &[OptimizerState] {
        &self.states
    }

    /// Worker 0's `(θ, θ̃)`; every replica holds the same values.
    pub fn params(&self) -> (&[f64], &[f64]) {
        (&self.workers[0].theta, &self.workers[0].theta_tilde)
    }

    pub fn check_replicas(&self) -> Result<()> {
        let head = &self.workers[0];
        for (i, w) in self.workers.iter().enumerate().skip(1) {
            let same = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
            if !same(&w.theta, &head.theta) || !same(&w.theta_tilde, &head.theta_tilde) {
                return Err(Error::ReplicaDivergence { worker: i });
            }
        }
        Ok(())
    }

    /// `Σ size·gradient` over `count` micro-batches of compute stage `stage`.
    fn accumulate(&self, worker: usize, at: At, stage: usize, count: u32) -> Result<(u64, Vec<f64>)> {
        let w = &self.workers[worker];
        let point = match at {
            At::Theta => &w.theta,
            At::Tilde => &w.theta_tilde,
        };
        let mut sum = vec![0.0; point.len()];
        let mut n = 0u64;
        for j in 0..count as usize {
            let batch = if self.full_batch {
                MicroBatch::full(self.batch_size)
            } else {
                MicroBatch::seeded(micro_batch_seed(self.master_seed, worker, stage, j), self.batch_size)
            };
            let g = self.problem.stochastic_grad(point, &batch)?;
            linalg::axpy(g.sample_count as f64, &g.gradient, &mut sum);
            n += g.sample_count;
        }
        Ok((n, sum))
    }

    fn accumulate_all(&self, at: At, stage: usize, counts: &[u32]) -> Result<Vec<(u64, Vec<f64>)>> {
        if counts.len() != self.workers.len() {
            return Err(Error::LayoutMismatch(format!(
                "{} micro-batch counts for {} workers",
                counts.len(),
                self.workers.len()
            )));
        }
        (0..self.workers.len()).map(|i| self.accumulate(i, at, stage, counts[i])).collect()
    }

    /// All-reduce of the counts and reduce-scatter of the sums, giving each
    /// worker its shard of the sample-weighted mean gradient.
    fn reduce(&mut self, contributions: &[&(u64, Vec<f64>)]) -> Result<(Vec<Vec<f64>>, Contribution)> {
        for (i, (n, _)) in contributions.iter().enumerate() {
            if *n == 0 {
                return Err(Error::EmptyAccumulator { worker: i });
            }
        }
        let counts: Vec<u64> = contributions.iter().map(|c| c.0).collect();
        let sums: Vec<Vec<f64>> = contributions.iter().map(|c| c.1.clone()).collect();
        let total = self.fabric.all_reduce_counts(&counts)?[0];
        let mut shards = self.fabric.reduce_scatter(&sums, &self.layout)?;
        for s in &mut shards {
            linalg::scale(1.0 / total as f64, s);
        }
        let mut logged_sum = vec![0.0; self.layout.dim()];
        for s in &sums {
            linalg::axpy(1.0, s, &mut logged_sum);
        }
        let contribution = Contribution { logged_sum, logged_count: total, applied: shards.concat() };
        Ok((shards, contribution))
    }

    fn commit(&mut self, base: &[f64], shards: &[Vec<f64>]) -> Result<Vec<f64>> {
        sharded_opt_step(&mut self.states, base, shards, &self.cfg, &self.layout, &mut self.fabric)
    }

    /// A step on forked optimizer state; the committed moments are untouched.
    fn transient(&mut self, base: &[f64], shards: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut fork = self.states.clone();
        sharded_opt_step(&mut fork, base, shards, &self.cfg, &self.layout, &mut self.fabric)
    }

    fn set_theta(&mut self, theta: &[f64]) {
        for w in &mut self.workers {
            w.theta.copy_from_slice(theta);
        }
    }

    fn set_tilde(&mut self, tilde: &[f64]) {
        for w in &mut self.workers {
            w.theta_tilde.copy_from_slice(tilde);
        }
    }

    /// Synchronous round: gradients at `θ_t`, averaged, one sharded step.
    pub fn ddp_round(&mut self, stage: usize, counts: &[u32]) -> Result<Contribution> {
        self.check_replicas()?;
        let accs = self.accumulate_all(At::Theta, stage, counts)?;
        let (shards, contribution) = self.reduce(&accs.iter().collect::<Vec<_>>())?;
        let base = self.workers[0].theta.clone();
        let next = self.commit(&base, &shards)?;
        self.set_theta(&next);
        self.set_tilde(&next);
        Ok(contribution)
    }

    /// Computes the first delayed gradient at the current `θ̃` (equal to `θ`).
    pub fn seed_delayed(&mut self, stage: usize, counts: &[u32]) -> Result<()> {
        self.check_replicas()?;
        let accs = self.accumulate_all(At::Tilde, stage, counts)?;
        for (w, acc) in self.workers.iter_mut().zip(accs) {
            w.pending_delayed_grad = Some(acc);
        }
        Ok(())
    }

    fn take_delayed(&mut self) -> Result<Vec<(u64, Vec<f64>)>> {
        self.workers
            .iter_mut()
            .enumerate()
            .map(|(i, w)| w.pending_delayed_grad.take().ok_or(Error::EmptyAccumulator { worker: i }))
            .collect()
    }

    fn store_delayed(&mut self, stage: usize, next_counts: Option<&[u32]>) -> Result<()> {
        if let Some(counts) = next_counts {
            let accs = self.accumulate_all(At::Tilde, stage, counts)?;
            for (w, acc) in self.workers.iter_mut().zip(accs) {
                w.pending_delayed_grad = Some(acc);
            }
        }
        Ok(())
    }

    /// `θ_{t+1} = Opt(θ_t, ḡ_t)` with `ḡ_t` computed at `θ̃_t = θ_{t−1}`;
    /// then `θ̃_{t+1} = θ_t` and the next delayed gradient is computed there.
    /// `next_counts` is `None` when that gradient would never be consumed.
    pub fn dpu_round(&mut self, t: usize, next_counts: Option<&[u32]>) -> Result<Contribution> {
        self.check_replicas()?;
        let delayed = self.take_delayed()?;
        let (shards, contribution) = self.reduce(&delayed.iter().collect::<Vec<_>>())?;
        let base = self.workers[0].theta.clone();
        let next = self.commit(&base, &shards)?;
        self.set_tilde(&base);
        self.set_theta(&next);
        self.store_delayed(t + 1, next_counts)?;
        Ok(contribution)
    }

    /// `θ_{t+1} = Opt(θ_t, ḡ_t)` and `θ̃_{t+1} = Opt(θ_{t+1}, ḡ_t)` on a
    /// forked optimizer state.
    pub fn wp_round(&mut self, t: usize, next_counts: Option<&[u32]>) -> Result<Contribution> {
        self.check_replicas()?;
        let delayed = self.take_delayed()?;
        let (shards, contribution) = self.reduce(&delayed.iter().collect::<Vec<_>>())?;
        let base = self.workers[0].theta.clone();
        let next = self.commit(&base, &shards)?;
        let predicted = self.transient(&next, &shards)?;
        self.set_theta(&next);
        self.set_tilde(&predicted);
        self.store_delayed(t + 1, next_counts)?;
        Ok(contribution)
    }

    /// Seeds the estimate accumulator with gradients at `θ₀ = θ̃₀` and hands
    /// it to the communication stream.
    pub fn acco_prologue(&mut self, counts: &[u32]) -> Result<()> {
        let accs = self.accumulate_all(At::Tilde, 0, counts)?;
        for (w, (n, g)) in self.workers.iter_mut().zip(accs) {
            w.comm_tilde = Some((n, g));
            w.stage = Stage::Stage1;
        }
        Ok(())
    }

    /// Compute stream, stage 1: accumulate `g` at `θ_t`.
    pub fn acco_stage1(&mut self, stage: usize, counts: &[u32]) -> Result<()> {
        if let Some(i) = self.workers.iter().position(|w| w.stage != Stage::Stage1) {
            return Err(Error::InvalidConfig(format!("worker {i} is not in stage 1")));
        }
        let accs = self.accumulate_all(At::Theta, stage, counts)?;
        for (w, (n, g)) in self.workers.iter_mut().zip(accs) {
            w.acc_g = g;
            w.acc_count = n;
        }
        Ok(())
    }

    /// Communication stream, stage 1: `θ̃_{t+1} = Opt(θ_t, ḡ̃)` on forked
    /// moments, all-gathered into every worker's buffer.
    pub fn acco_commit_estimate(&mut self) -> Result<()> {
        self.check_replicas()?;
        let tilde: Vec<(u64, Vec<f64>)> = self
            .workers
            .iter()
            .enumerate()
            .map(|(i, w)| w.comm_tilde.clone().ok_or(Error::EmptyAccumulator { worker: i }))
            .collect::<Result<_>>()?;
        let (shards, _) = self.reduce(&tilde.iter().collect::<Vec<_>>())?;
        let base = self.workers[0].theta.clone();
        let estimate = self.transient(&base, &shards)?;
        for w in &mut self.workers {
            w.buffer = Buffer::Params(estimate.clone());
        }
        Ok(())
    }

    /// Stage-1 barrier: the compute stream takes `θ̃_{t+1}` from the buffer
    /// and leaves its `(N, g)` there.
    pub fn acco_handoff_stage1(&mut self) -> Result<()> {
        for (i, w) in self.workers.iter_mut().enumerate() {
            if w.acc_count == 0 {
                return Err(Error::EmptyAccumulator { worker: i });
            }
            let Buffer::Params(p) = std::mem::replace(&mut w.buffer, Buffer::Empty) else {
                return Err(Error::InvalidConfig(format!("worker {i} buffer holds no estimate")));
            };
            w.theta_tilde = p;
            w.buffer = Buffer::Grads { count: w.acc_count, sum: std::mem::take(&mut w.acc_g) };
            w.acc_g = vec![0.0; w.theta.len()];
            w.acc_count = 0;
            w.stage = Stage::Stage2;
        }
        Ok(())
    }

    /// Compute stream, stage 2: accumulate `g̃` at `θ̃_{t+1}`.
    pub fn acco_stage2(&mut self, stage: usize, counts: &[u32]) -> Result<()> {
        if let Some(i) = self.workers.iter().position(|w| w.stage != Stage::Stage2) {
            return Err(Error::InvalidConfig(format!("worker {i} is not in stage 2")));
        }
        let accs = self.accumulate_all(At::Tilde, stage, counts)?;
        for (w, (n, g)) in self.workers.iter_mut().zip(accs) {
            w.acc_g_tilde = g;
            w.acc_count_tilde = n;
        }
        Ok(())
    }

    /// Communication stream, stage 2: `θ_{t+1} = Opt(θ_t, (Σg + Σg̃)/(ΣN + ΣÑ))`
    /// on the committed moments.
    pub fn acco_commit_full(&mut self) -> Result<Contribution> {
        self.check_replicas()?;
        let mut combined = Vec::with_capacity(self.workers.len());
        for (i, w) in self.workers.iter().enumerate() {
            let Buffer::Grads { count, sum } = &w.buffer else {
                return Err(Error::EmptyAccumulator { worker: i });
            };
            let (nt, gt) = w.comm_tilde.as_ref().ok_or(Error::EmptyAccumulator { worker: i })?;
            let mut s = sum.clone();
            linalg::axpy(1.0, gt, &mut s);
            combined.push((count + nt, s));
        }
        let (shards, contribution) = self.reduce(&combined.iter().collect::<Vec<_>>())?;
        let base = self.workers[0].theta.clone();
        let next = self.commit(&base, &shards)?;
        self.set_theta(&next);
        Ok(contribution)
    }

    /// Stage-2 barrier: the new estimate accumulator moves to the
    /// communication stream. After the final update it is empty.
    pub fn acco_handoff_stage2(&mut self) -> Result<()> {
        for w in &mut self.workers {
            w.buffer = Buffer::Empty;
            w.comm_tilde = (w.acc_count_tilde > 0)
                .then(|| (w.acc_count_tilde, std::mem::replace(&mut w.acc_g_tilde, vec![0.0; w.theta.len()])));
            w.acc_count_tilde = 0;
            w.stage = Stage::Stage1;
        }
        Ok(())
    }
}
