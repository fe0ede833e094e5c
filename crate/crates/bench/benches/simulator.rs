use acco_core::collectives::{schedule_run, SchedulePlan};
use acco_core::optim::{shard_partition, sharded_opt_step};
use acco_core::{
    run_protocol, CostModel, Fabric, HeterogeneityProfile, OptimizerConfig, OptimizerState, Problem,
    Protocol, SimConfig,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn optimizer_step(c: &mut Criterion) {
    let cfg = OptimizerConfig::adamw(1e-3, 0.9, 0.999, 0.01);
    let mut group = c.benchmark_group("adamw_step");
    for d in [1_000usize, 100_000] {
        let grad: Vec<f64> = (0..d).map(|i| (i as f64).sin()).collect();
        group.bench_with_input(BenchmarkId::new("dense", d), &d, |b, &d| {
            let mut state = OptimizerState::new(cfg.kind, 0, d);
            let mut theta = vec![0.5; d];
            b.iter(|| state.apply(black_box(&mut theta), &grad, &cfg).unwrap());
        });
        group.bench_with_input(BenchmarkId::new("sharded_8", d), &d, |b, &d| {
            let layout = shard_partition(d, 8).unwrap();
            let mut states = layout.states(&cfg);
            let mut fabric = Fabric::new(8);
            let shards = layout.split(&grad).unwrap();
            let theta = vec![0.5; d];
            b.iter(|| sharded_opt_step(&mut states, black_box(&theta), &shards, &cfg, &layout, &mut fabric).unwrap());
        });
    }
    group.finish();
}

fn collectives(c: &mut Criterion) {
    let mut group = c.benchmark_group("all_reduce");
    for n in [2usize, 8, 32] {
        let inputs: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64; 10_000]).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &inputs, |b, inputs| {
            let mut fabric = Fabric::new(inputs.len());
            b.iter(|| fabric.all_reduce(black_box(inputs)).unwrap());
        });
    }
    group.finish();
}

fn scheduler(c: &mut Criterion) {
    let profile = HeterogeneityProfile::with_multipliers(1.0, (0..16).map(|i| 1.0 + (i % 4) as f64 * 0.5).collect());
    let cost = CostModel { alpha_s: 0.5, beta_s_per_byte: 1e-9, ..CostModel::free() };
    let mut group = c.benchmark_group("schedule_1000_updates");
    for protocol in Protocol::ALL {
        let plan =
            SchedulePlan { protocol, workers: 16, dim: 1_000_000, updates: 1_000, accumulation: 2, warmup_rounds: 0 };
        group.bench_function(protocol.name(), |b| b.iter(|| schedule_run(black_box(plan), &profile, &cost).unwrap()));
    }
    group.finish();
}

fn end_to_end(c: &mut Criterion) {
    let problem = Problem::logistic(512, 32, 1e-3, 1).unwrap();
    let opt = OptimizerConfig::adamw(0.05, 0.9, 0.999, 0.0);
    let sim = SimConfig { n_workers: 4, batch_size: 16, ..SimConfig::default() };
    let theta0 = vec![0.0; problem.dim()];
    let mut group = c.benchmark_group("run_protocol_100_updates");
    group.sample_size(20);
    for protocol in Protocol::ALL {
        group.bench_function(protocol.name(), |b| {
            b.iter(|| run_protocol(protocol, &problem, &opt, &sim, black_box(&theta0), 100).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, optimizer_step, collectives, scheduler, end_to_end);
criterion_main!(benches);
