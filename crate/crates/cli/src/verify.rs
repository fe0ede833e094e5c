//! Named verification suites behind `acco-sim verify`.

use std::str::FromStr;
use std::time::Instant;

use acco_core::collectives::{schedule_run, SchedulePlan};
use acco_core::linalg;
use acco_core::optim::{shard_partition, sharded_opt_step};
use acco_core::problems::InitSpec;
use acco_core::theory::{
    check_gd_descent, check_prop1_bound, check_prop2_bound, floor_gb, memory_model, LyapunovParams, MemoryMethod,
    MemoryQuery,
};
use acco_core::{
    collective_time, run_protocol, CollectiveKind, CostModel, Fabric, HeterogeneityProfile, OptimizerConfig,
    OptimizerState, Problem, Protocol, SimConfig,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Lyapunov,
    Prop1,
    Prop2,
    Memory,
    Collectives,
    ShardEquivalence,
    AccoGdEquivalence,
    Heterogeneous,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Lyapunov,
        Suite::Prop1,
        Suite::Prop2,
        Suite::Memory,
        Suite::Collectives,
        Suite::ShardEquivalence,
        Suite::AccoGdEquivalence,
        Suite::Heterogeneous,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lyapunov => "lyapunov",
            Suite::Prop1 => "prop1",
            Suite::Prop2 => "prop2",
            Suite::Memory => "memory",
            Suite::Collectives => "collectives",
            Suite::ShardEquivalence => "shard-equivalence",
            Suite::AccoGdEquivalence => "acco-gd-equivalence",
            Suite::Heterogeneous => "heterogeneous",
        }
    }
}

impl FromStr for Suite {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            let names: Vec<_> = Suite::ALL.iter().map(|x| x.name()).collect();
            CliError::Config(format!("unknown suite `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lhs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rhs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool) -> Self {
        Check { name: name.into(), lhs: None, rhs: None, slack: None, detail: None, pass }
    }

    fn sides(mut self, lhs: f64, rhs: f64) -> Self {
        self.lhs = Some(lhs);
        self.rhs = Some(rhs);
        self
    }

    fn slack(mut self, slack: f64) -> Self {
        self.slack = Some(slack);
        self
    }

    fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub pass: bool,
    pub elapsed_s: f64,
    pub checks: Vec<Check>,
}

pub fn run_suite(suite: Suite) -> Result<SuiteReport, CliError> {
    let start = Instant::now();
    let checks = match suite {
        Suite::Lyapunov => lyapunov_suite()?,
        Suite::Prop1 => prop1_suite()?,
        Suite::Prop2 => prop2_suite()?,
        Suite::Memory => memory_suite()?,
        Suite::Collectives => collectives_suite()?,
        Suite::ShardEquivalence => shard_suite()?,
        Suite::AccoGdEquivalence => gd_equivalence_suite()?,
        Suite::Heterogeneous => heterogeneous_suite()?,
    };
    Ok(SuiteReport {
        suite,
        pass: checks.iter().all(|c| c.pass),
        elapsed_s: start.elapsed().as_secs_f64(),
        checks,
    })
}

type Trajectory = Vec<(Vec<f64>, Vec<f64>)>;

/// `(θ_t, θ̃_t)` of a single-worker ACCO-SGD run; exact gradients unless a
/// seed is given.
pub fn acco_sgd_trajectory(
    problem: &Problem,
    eta: f64,
    theta0: &[f64],
    updates: usize,
    seed: Option<u64>,
) -> Result<Trajectory, CliError> {
    let sim = SimConfig {
        full_batch: seed.is_none(),
        master_seed: seed.unwrap_or(0),
        record_trajectory: true,
        ..SimConfig::default()
    };
    let trace = run_protocol(Protocol::Acco, problem, &OptimizerConfig::sgd(eta), &sim, theta0, updates)?;
    Ok(trace.trajectory.expect("trajectory was requested"))
}

/// Random quadratic instance `seed` with its in-regime step `1/(2L)` and a
/// Gaussian starting point.
fn quadratic_instance(d: usize, seed: u64, noise: f64) -> Result<(Problem, f64, Vec<f64>), CliError> {
    let l = 0.5 + (seed % 7) as f64 * 0.25;
    let problem = Problem::random_quadratic(d, 0.01 * l, l, noise, seed)?;
    let eta = 1.0 / (2.0 * problem.smoothness());
    let theta0 = InitSpec::Gaussian { scale: 2.0, seed }.materialize(d)?;
    Ok((problem, eta, theta0))
}

fn lyapunov_suite() -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    for (d, updates) in [(1usize, 60usize), (10, 60), (100, 25)] {
        let margins: Vec<Result<(bool, f64), CliError>> = (0..50u64)
            .into_par_iter()
            .map(|seed| {
                let (p, eta, theta0) = quadratic_instance(d, seed, 0.0)?;
                let tr = acco_sgd_trajectory(&p, eta, &theta0, updates, None)?;
                let report = check_gd_descent(&tr, &p, &LyapunovParams::for_problem(&p, eta)?)?;
                Ok((report.pass, report.worst_margin))
            })
            .collect();
        let margins: Vec<(bool, f64)> = margins.into_iter().collect::<Result<_, _>>()?;
        let passed = margins.iter().filter(|m| m.0).count();
        let worst = margins.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
        checks.push(
            Check::new(format!("descent_d{d}"), passed == margins.len())
                .sides(worst, 0.0)
                .slack(acco_core::theory::DETERMINISTIC_SLACK)
                .detail(format!("{passed}/{} traces satisfy the per-step decrease", margins.len())),
        );
    }
    let p = Problem::random_quadratic(5, 0.5, 1.0, 0.0, 7)?;
    let eta = 3.0 / p.smoothness();
    let tr = acco_sgd_trajectory(&p, eta, &[1.0; 5], 10, None)?;
    let report = check_gd_descent(&tr, &p, &LyapunovParams::for_problem(&p, eta)?)?;
    checks.push(
        Check::new("negative_control_eta_3_over_l", !report.pass)
            .detail(format!("violation expected out of regime; first at step {:?}", report.first_violation)),
    );
    Ok(checks)
}

fn prop1_suite() -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    let p = Problem::isotropic(1, 1.0, 0.0)?;
    let tr = acco_sgd_trajectory(&p, 0.5, &[1.0], 4, None)?;
    let c = check_prop1_bound(&tr, &p, &LyapunovParams::for_problem(&p, 0.5)?, 4)?;
    let exact = (c.lhs - 0.6640625).abs() <= 1e-12 && (c.rhs - 4.0).abs() <= 1e-12;
    checks.push(
        Check::new("scalar_hand_case", c.pass && exact)
            .sides(c.lhs, c.rhs)
            .slack(c.slack)
            .detail("expected lhs 0.6640625, rhs 4"),
    );
    let per_seed: Vec<Result<Check, CliError>> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let (p, eta, theta0) = quadratic_instance(10, 500 + seed, 0.0)?;
            let tr = acco_sgd_trajectory(&p, eta, &theta0, 100, None)?;
            let c = check_prop1_bound(&tr, &p, &LyapunovParams::for_problem(&p, eta)?, 100)?;
            Ok(Check::new(format!("quadratic_d10_seed{seed}"), c.pass).sides(c.lhs, c.rhs).slack(c.slack))
        })
        .collect();
    for c in per_seed {
        checks.push(c?);
    }
    Ok(checks)
}

/// Monte-Carlo check of the stochastic bound; `noise` is the per-coordinate
/// standard deviation, so the estimator variance is `d·noise²`.
pub fn prop2_case(problem: &Problem, eta: f64, theta0: &[f64], noise: f64, t: usize, seeds: u64) -> Result<Check, CliError> {
    let traces: Vec<Result<Trajectory, CliError>> = (0..seeds)
        .into_par_iter()
        .map(|s| acco_sgd_trajectory(problem, eta, theta0, t, Some(10_000 + s)))
        .collect();
    let traces: Vec<Trajectory> = traces.into_iter().collect::<Result<_, _>>()?;
    let sigma_sq = problem.dim() as f64 * noise * noise;
    let c = check_prop2_bound(&traces, problem, &LyapunovParams::for_problem(problem, eta)?, sigma_sq, t)?;
    Ok(Check::new(format!("d{}_sigma{noise}_eta{eta:.4}_T{t}_seeds{seeds}", problem.dim()), c.pass)
        .sides(c.lhs_mean, c.rhs)
        .slack(c.slack)
        .detail(format!("standard error {:.3e}", c.lhs_std_error)))
}

fn prop2_suite() -> Result<Vec<Check>, CliError> {
    let scalar = Problem::isotropic(1, 1.0, 1.0)?;
    let half = Problem::random_quadratic(10, 0.1, 1.0, 0.5, 5)?;
    let unit = Problem::random_quadratic(10, 0.1, 1.0, 1.0, 6)?;
    Ok(vec![
        prop2_case(&scalar, 0.25, &[1.0], 1.0, 50, 500)?,
        prop2_case(&half, 0.5 / half.smoothness(), &[1.0; 10], 0.5, 50, 200)?,
        prop2_case(&unit, 0.5 / unit.smoothness(), &[1.0; 10], 1.0, 50, 200)?,
    ])
}

/// Rounded values printed in the published memory table at
/// `(K, N, Ψ) = (12, 64, 7.5e9)`.
pub const MEMORY_TABLE_GB: [(MemoryMethod, u64); 10] = [
    (MemoryMethod::Ddp, 120),
    (MemoryMethod::Zero1, 31),
    (MemoryMethod::Zero2, 16),
    (MemoryMethod::Zero3, 2),
    (MemoryMethod::Slowmo, 150),
    (MemoryMethod::Diloco, 150),
    (MemoryMethod::Co2, 180),
    (MemoryMethod::Dpu, 46),
    (MemoryMethod::Wp, 46),
    (MemoryMethod::Acco, 46),
];

fn memory_suite() -> Result<Vec<Check>, CliError> {
    MEMORY_TABLE_GB
        .iter()
        .map(|&(method, expected)| {
            let bytes = memory_model(&MemoryQuery { method, k: 12.0, workers: 64, psi: 7.5e9 })?;
            let gb = floor_gb(bytes);
            Ok(Check::new(method.name(), gb == expected)
                .sides(gb as f64, expected as f64)
                .detail(format!("{bytes:.0} bytes, floored to whole GB")))
        })
        .collect()
}

fn collectives_suite() -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    let mut f = Fabric::new(3);
    let out = f.all_reduce(&[vec![1.0], vec![2.0], vec![3.0]])?;
    checks.push(Check::new("all_reduce_scalar_sum", out.iter().all(|v| v == &[6.0])));

    let mut worst = 0.0_f64;
    for d in [1usize, 2, 7, 33, 100] {
        for n in [1usize, 2, 3, 5, 8, 13] {
            let inputs: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..d).map(|j| ((i * 31 + j * 7) as f64).sin() * 10.0).collect())
                .collect();
            let layout = shard_partition(d, n)?;
            let mut f = Fabric::new(n);
            let reduced = f.all_reduce(&inputs)?;
            let shards = f.reduce_scatter(&inputs, &layout)?;
            for (a, b) in f.all_gather(&shards, &layout)?.iter().zip(&reduced) {
                worst = worst.max(linalg::max_abs_diff(a, b));
            }
        }
    }
    checks.push(Check::new("reduce_scatter_all_gather_is_all_reduce", worst == 0.0).sides(worst, 0.0));

    let model = CostModel { alpha_s: 0.0, beta_s_per_byte: 1e-9, bytes_per_element: 8, topology_factor: 1.0 };
    let t = collective_time(CollectiveKind::AllReduce, 1_000_000, 4, &model);
    checks.push(Check::new("all_reduce_time_1e6_elements", (t - 0.012).abs() < 1e-15).sides(t, 0.012));
    let single = collective_time(CollectiveKind::AllGather, 1_000_000, 1, &model);
    checks.push(Check::new("single_worker_is_free", single == 0.0).sides(single, 0.0));

    let (acco, ddp) = overlap_timelines(8)?;
    let two_each = acco.stages[1..].iter().flatten().all(|&m| m == 2);
    let acco_idle = (0..acco.workers).map(|w| acco.idle_fraction(w)).fold(0.0, f64::max);
    checks.push(Check::new("acco_two_micro_batches_per_stage", two_each));
    checks.push(Check::new("acco_no_idle", acco_idle == 0.0).sides(acco_idle, 0.0));
    let ddp_idle = (0..ddp.workers).map(|w| ddp.idle_fraction(w)).fold(f64::INFINITY, f64::min);
    let bound = 2.0 / 3.0;
    checks.push(Check::new("ddp_idle_at_least_comm_share", ddp_idle >= bound - 1e-12).sides(ddp_idle, bound));
    Ok(checks)
}

/// ACCO and DDP timelines with 1 s micro-batches and a 2 s collective.
pub fn overlap_timelines(updates: usize) -> Result<(acco_core::Timeline, acco_core::Timeline), CliError> {
    let profile = HeterogeneityProfile::homogeneous(1.0);
    // reduce-scatter + all-gather over 2 workers, 1 s latency each
    let cost = CostModel { alpha_s: 1.0, ..CostModel::free() };
    let plan = |protocol| SchedulePlan { protocol, workers: 2, dim: 16, updates, accumulation: 1, warmup_rounds: 0 };
    Ok((schedule_run(plan(Protocol::Acco), &profile, &cost)?, schedule_run(plan(Protocol::Ddp), &profile, &cost)?))
}

fn shard_suite() -> Result<Vec<Check>, CliError> {
    let d = 50;
    let cfg = OptimizerConfig::adamw(0.05, 0.9, 0.95, 0.1);
    let problem = Problem::random_quadratic(d, 0.1, 2.0, 0.3, 1)?;
    let mut checks = Vec::new();
    for n in [1usize, 2, 3, 8] {
        let layout = shard_partition(d, n)?;
        let mut states = layout.states(&cfg);
        let mut fabric = Fabric::new(n);
        let mut full_state = OptimizerState::new(cfg.kind, 0, d);
        let mut sharded = vec![1.0; d];
        let mut plain = vec![1.0; d];
        let mut worst = 0.0_f64;
        for step in 0..25u64 {
            let batch = acco_core::MicroBatch::seeded(step, 1);
            let g = problem.stochastic_grad(&plain, &batch)?.gradient;
            full_state.apply(&mut plain, &g, &cfg)?;
            sharded = sharded_opt_step(&mut states, &sharded, &layout.split(&g)?, &cfg, &layout, &mut fabric)?;
            worst = worst.max(linalg::max_abs_diff(&plain, &sharded));
        }
        checks.push(Check::new(format!("adamw_n{n}_25_steps"), worst <= 1e-12).sides(worst, 1e-12));
    }
    Ok(checks)
}

/// Largest `|θ_t^ACCO − θ_t^GD|` over `updates` deterministic steps.
pub fn gd_deviation(problem: &Problem, eta: f64, theta0: &[f64], updates: usize, workers: usize) -> Result<f64, CliError> {
    let sim = SimConfig {
        n_workers: workers,
        full_batch: true,
        record_trajectory: true,
        cost: CostModel { alpha_s: 0.3, ..CostModel::free() },
        profile: HeterogeneityProfile::with_multipliers(0.1, (0..workers).map(|i| 1.0 + i as f64).collect()),
        ..SimConfig::default()
    };
    let trace = run_protocol(Protocol::Acco, problem, &OptimizerConfig::sgd(eta), &sim, theta0, updates)?;
    let mut theta = theta0.to_vec();
    let mut worst = 0.0_f64;
    for (acco, _) in trace.trajectory.expect("trajectory was requested").iter() {
        worst = worst.max(linalg::max_abs_diff(acco, &theta));
        let (_, g) = problem.value_and_grad(&theta)?;
        linalg::axpy(-eta, &g, &mut theta);
    }
    Ok(worst)
}

fn gd_equivalence_suite() -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    for d in [1usize, 10, 100] {
        let (p, eta, theta0) = quadratic_instance(d, 40 + d as u64, 0.0)?;
        let dev = gd_deviation(&p, eta, &theta0, 100, 3)?;
        checks.push(Check::new(format!("quadratic_d{d}"), dev <= 1e-12).sides(dev, 1e-12));
    }
    let logistic = Problem::logistic(200, 8, 1e-2, 3)?;
    let eta = 1.0 / logistic.smoothness();
    let dev = gd_deviation(&logistic, eta, &[0.0; 8], 100, 4)?;
    checks.push(Check::new("logistic_d8", dev <= 1e-12).sides(dev, 1e-12));
    Ok(checks)
}

/// Samples-per-second ratio ACCO:DDP with one worker four times slower.
pub fn straggler_ratio(cost: CostModel, updates: usize) -> Result<f64, CliError> {
    let profile = HeterogeneityProfile::with_multipliers(1.0, vec![1.0, 1.0, 1.0, 4.0]);
    let plan = |protocol| SchedulePlan { protocol, workers: 4, dim: 1000, updates, accumulation: 1, warmup_rounds: 0 };
    let acco = schedule_run(plan(Protocol::Acco), &profile, &cost)?;
    let ddp = schedule_run(plan(Protocol::Ddp), &profile, &cost)?;
    Ok(acco.samples_per_second(1) / ddp.samples_per_second(1))
}

fn heterogeneous_suite() -> Result<Vec<Check>, CliError> {
    let free = straggler_ratio(CostModel::free(), 50)?;
    let slow_net = CostModel { alpha_s: 0.25, beta_s_per_byte: 1e-4, ..CostModel::free() };
    let costly = straggler_ratio(slow_net, 50)?;
    Ok(vec![
        Check::new("ratio_without_comm_cost", (free - 3.25).abs() <= 1e-12).sides(free, 3.25),
        Check::new("ratio_with_comm_cost_above_2_5", costly > 2.5).sides(costly, 2.5),
    ])
}
