use super::*;
use crate::optim::shard_partition;
use crate::protocols::Protocol;
use proptest::prelude::*;

fn plan(protocol: Protocol, workers: usize, updates: usize, k: u32) -> SchedulePlan {
    SchedulePlan { protocol, workers, dim: 10, updates, accumulation: k, warmup_rounds: 0 }
}

/// Cost model whose sync (reduce-scatter + all-gather) over `dim = 10`
/// elements and two workers takes exactly `seconds`.
fn sync_cost(seconds: f64) -> CostModel {
    CostModel { alpha_s: seconds / 2.0, ..CostModel::free() }
}

#[test]
fn all_reduce_examples() {
    let mut f = Fabric::new(3);
    let out = f.all_reduce(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
    assert_eq!(out, vec![vec![6.0]; 3]);

    let mut f = Fabric::new(2);
    assert_eq!(f.all_reduce(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(), vec![vec![4.0, 6.0]; 2]);

    let mut f = Fabric::new(1);
    assert_eq!(f.all_reduce(&[vec![7.5, -1.0]]).unwrap(), vec![vec![7.5, -1.0]]);
    assert_eq!(f.all_reduce_counts(&[9]).unwrap(), vec![9]);
}

#[test]
fn all_reduce_rejects_ragged_inputs() {
    let mut f = Fabric::new(2);
    assert!(matches!(
        f.all_reduce(&[vec![1.0, 2.0], vec![3.0]]),
        Err(crate::Error::DimensionMismatch { .. })
    ));
    assert!(f.all_reduce(&[vec![1.0]]).is_err());
}

#[test]
fn reduce_scatter_and_all_gather_examples() {
    let layout = shard_partition(2, 2).unwrap();
    let mut f = Fabric::new(2);
    let shards = f.reduce_scatter(&[vec![1.0, 2.0], vec![3.0, 4.0]], &layout).unwrap();
    assert_eq!(shards, vec![vec![4.0], vec![6.0]]);
    let full = f.all_gather(&shards, &layout).unwrap();
    assert_eq!(full, vec![vec![4.0, 6.0]; 2]);

    // more workers than elements leaves some shards empty
    let layout = shard_partition(2, 3).unwrap();
    let mut f = Fabric::new(3);
    let shards = f.reduce_scatter(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]], &layout).unwrap();
    assert!(shards.iter().any(Vec::is_empty));
    assert_eq!(f.all_gather(&shards, &layout).unwrap()[2], vec![6.0, 6.0]);
}

#[test]
fn all_gather_rejects_wrong_shard_length() {
    let layout = shard_partition(4, 2).unwrap();
    let mut f = Fabric::new(2);
    assert!(matches!(
        f.all_gather(&[vec![1.0], vec![2.0, 3.0]], &layout),
        Err(crate::Error::LayoutMismatch(_))
    ));
    let wrong_dim = shard_partition(3, 2).unwrap();
    assert!(f.reduce_scatter(&[vec![1.0; 4], vec![1.0; 4]], &wrong_dim).is_err());
}

#[test]
fn all_gather_of_split_round_trips() {
    use rand::Rng;
    let mut rng = crate::seed::rng(11);
    let v: Vec<f64> = (0..7).map(|_| rng.random_range(-5.0..5.0)).collect();
    let layout = shard_partition(7, 3).unwrap();
    let shards = layout.split(&v).unwrap();
    let mut f = Fabric::new(3);
    for out in f.all_gather(&shards, &layout).unwrap() {
        assert_eq!(out, v);
    }
}

#[test]
fn fabric_counts_calls() {
    let layout = shard_partition(4, 2).unwrap();
    let mut f = Fabric::new(2);
    let shards = f.reduce_scatter(&[vec![1.0; 4], vec![1.0; 4]], &layout).unwrap();
    f.all_gather(&shards, &layout).unwrap();
    f.all_reduce_counts(&[1, 2]).unwrap();
    let s = f.stats();
    assert_eq!((s.reduce_scatter_calls, s.all_gather_calls, s.all_reduce_calls), (1, 1, 1));
    // each ring pass moves (N-1)/N of the payload per worker
    assert_eq!(s.elements_sent, 2.0 + 2.0 + 1.0);
}

proptest! {
    #[test]
    fn reduce_scatter_then_all_gather_is_all_reduce(
        d in 1usize..40,
        n in 1usize..9,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = crate::seed::rng(seed);
        let inputs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect();
        let layout = shard_partition(d, n).unwrap();
        let mut f = Fabric::new(n);
        let reduced = f.all_reduce(&inputs).unwrap();
        let shards = f.reduce_scatter(&inputs, &layout).unwrap();
        let gathered = f.all_gather(&shards, &layout).unwrap();
        prop_assert_eq!(gathered, reduced);
    }
}

#[test]
fn collective_time_examples() {
    let model = CostModel { alpha_s: 0.0, beta_s_per_byte: 1e-9, bytes_per_element: 8, topology_factor: 1.0 };
    let t = collective_time(CollectiveKind::AllReduce, 1_000_000, 4, &model);
    assert!((t - 0.012).abs() < 1e-15, "{t}");
    for kind in [CollectiveKind::AllReduce, CollectiveKind::ReduceScatter, CollectiveKind::AllGather] {
        assert_eq!(collective_time(kind, 1_000_000, 1, &model), 0.0);
    }
    let rs = collective_time(CollectiveKind::ReduceScatter, 1234, 5, &model);
    let ag = collective_time(CollectiveKind::AllGather, 1234, 5, &model);
    let ar = collective_time(CollectiveKind::AllReduce, 1234, 5, &model);
    assert!((rs + ag - ar).abs() < 1e-18);
    assert_eq!(model.sync_time(1234, 5), rs + ag);
}

#[test]
fn topology_factor_scales_bandwidth_term_only() {
    let base = CostModel { alpha_s: 0.5, beta_s_per_byte: 1e-6, bytes_per_element: 4, topology_factor: 1.0 };
    let slow = CostModel { topology_factor: 3.0, ..base };
    let b = collective_time(CollectiveKind::AllGather, 100, 2, &base) - 0.5;
    let s = collective_time(CollectiveKind::AllGather, 100, 2, &slow) - 0.5;
    assert!((s - 3.0 * b).abs() < 1e-15);
}

#[test]
fn invalid_cost_and_profile() {
    assert!(CostModel { alpha_s: -1.0, ..CostModel::free() }.validate().is_err());
    assert!(CostModel { bytes_per_element: 0, ..CostModel::free() }.validate().is_err());
    assert!(HeterogeneityProfile::with_multipliers(1.0, vec![1.0, 0.0]).validate(2).is_err());
    assert!(HeterogeneityProfile::with_multipliers(1.0, vec![1.0]).validate(2).is_err());
    assert!(HeterogeneityProfile::homogeneous(0.0).validate(1).is_err());
}

#[test]
fn event_clock_orders_by_time_then_stream_then_insertion() {
    let mut clock = EventClock::new(2);
    clock.schedule(2.0, Stream::Compute(0), "c0-late").unwrap();
    clock.schedule(1.0, Stream::Compute(1), "c1").unwrap();
    clock.schedule(1.0, Stream::Compute(0), "c0").unwrap();
    clock.schedule(1.0, Stream::Comm(0), "comm").unwrap();
    clock.schedule(1.0, Stream::Compute(0), "c0-second").unwrap();
    let order: Vec<&str> = std::iter::from_fn(|| clock.pop().map(|e| e.2)).collect();
    assert_eq!(order, ["comm", "c0", "c0-second", "c1", "c0-late"]);
    assert_eq!(clock.now(), 2.0);
    assert!(clock.schedule(1.5, Stream::Comm(0), "past").is_err());
}

#[test]
fn acco_overlaps_two_micro_batches_per_slow_collective() {
    let tl = schedule_run(plan(Protocol::Acco, 2, 6, 1), &HeterogeneityProfile::homogeneous(1.0), &sync_cost(2.0))
        .unwrap();
    // the prologue needs a single micro-batch; every later stage spans a 2 s collective
    assert_eq!(tl.stages[0], vec![1, 1]);
    for stage in &tl.stages[1..] {
        assert_eq!(stage, &vec![2, 2]);
    }
    assert_eq!(tl.trailing, vec![2, 2]);
    for w in 0..2 {
        assert_eq!(tl.idle_fraction(w), 0.0);
    }
    assert_eq!(tl.makespan, 1.0 + 2.0 * 12.0);
    assert_eq!(tl.commit_times, vec![5.0, 9.0, 13.0, 17.0, 21.0, 25.0]);
}

#[test]
fn acco_needs_a_micro_batch_even_with_free_communication() {
    let tl = schedule_run(plan(Protocol::Acco, 3, 4, 1), &HeterogeneityProfile::homogeneous(0.5), &CostModel::free())
        .unwrap();
    assert!(tl.stages.iter().flatten().all(|&m| m == 1));
    assert_eq!(tl.makespan, 0.5 * 8.0);
}

#[test]
fn acco_respects_accumulation_minimum() {
    let tl = schedule_run(plan(Protocol::Acco, 2, 3, 3), &HeterogeneityProfile::homogeneous(1.0), &sync_cost(1.0))
        .unwrap();
    assert!(tl.stages.iter().flatten().all(|&m| m == 3));
}

#[test]
fn ddp_straggler_round() {
    let profile = HeterogeneityProfile::with_multipliers(1.0, vec![1.0, 1.0, 1.0, 4.0]);
    let tl = schedule_run(plan(Protocol::Ddp, 4, 3, 4), &profile, &CostModel::free()).unwrap();
    assert_eq!(tl.commit_times, vec![16.0, 32.0, 48.0]);

    let tl = schedule_run(plan(Protocol::Ddp, 4, 5, 1), &profile, &CostModel::free()).unwrap();
    assert_eq!(tl.makespan, 20.0);
    for w in 0..3 {
        assert_eq!(tl.idle_fraction_between(w, 0.0, 4.0), 0.75);
    }
    assert_eq!(tl.idle_fraction(3), 0.0);
    assert!(tl.trailing.iter().all(|&m| m == 0));
}

#[test]
fn ddp_round_is_slowest_worker_plus_collective() {
    let profile = HeterogeneityProfile::with_multipliers(0.25, vec![1.0, 3.0]);
    let tl = schedule_run(plan(Protocol::Ddp, 2, 4, 2), &profile, &sync_cost(0.7)).unwrap();
    let mut prev = 0.0;
    for &c in &tl.commit_times {
        assert!((c - prev - (2.0 * 0.75 + 0.7)).abs() < 1e-12);
        prev = c;
    }
}

#[test]
fn heterogeneous_acco_to_ddp_ratio() {
    let profile = HeterogeneityProfile::with_multipliers(1.0, vec![1.0, 1.0, 1.0, 4.0]);
    let acco = schedule_run(plan(Protocol::Acco, 4, 10, 1), &profile, &CostModel::free()).unwrap();
    let ddp = schedule_run(plan(Protocol::Ddp, 4, 10, 1), &profile, &CostModel::free()).unwrap();
    // every 4 s window: fast workers finish 4 micro-batches each, the slow one 1
    for stage in &acco.stages[2..] {
        assert_eq!(stage, &vec![4, 4, 4, 1]);
    }
    assert_eq!(ddp.samples_per_second(8), 8.0);
    assert_eq!(acco.samples_per_second(8) / ddp.samples_per_second(8), 3.25);
}

#[test]
fn dpu_overlaps_one_round_of_communication() {
    let tl = schedule_run(plan(Protocol::Dpu, 2, 4, 1), &HeterogeneityProfile::homogeneous(1.0), &sync_cost(3.0))
        .unwrap();
    // prologue ends at 1; each round then waits for the 3 s collective
    assert_eq!(tl.commit_times, vec![4.0, 7.0, 10.0, 13.0]);
    assert_eq!(tl.trailing, vec![1, 1]);
    assert!((tl.idle_fraction(0) - 8.0 / 13.0).abs() < 1e-12);

    let fast = schedule_run(plan(Protocol::Wp, 2, 4, 2), &HeterogeneityProfile::homogeneous(1.0), &sync_cost(0.5))
        .unwrap();
    assert_eq!(fast.commit_times, vec![2.5, 4.5, 6.5, 8.5]);
}

#[test]
fn warmup_rounds_are_synchronous() {
    let profile = HeterogeneityProfile::homogeneous(1.0);
    let mut p = plan(Protocol::Dpu, 2, 5, 1);
    p.warmup_rounds = 5;
    let all_warm = schedule_run(p, &profile, &sync_cost(2.0)).unwrap();
    let ddp = schedule_run(plan(Protocol::Ddp, 2, 5, 1), &profile, &sync_cost(2.0)).unwrap();
    assert_eq!(all_warm.commit_times, ddp.commit_times);
    assert_eq!(all_warm.stages, ddp.stages);

    p.warmup_rounds = 2;
    let mixed = schedule_run(p, &profile, &sync_cost(2.0)).unwrap();
    // two 3 s synchronous rounds, a 1 s prologue, then 2 s overlapped rounds
    assert_eq!(mixed.commit_times, vec![3.0, 6.0, 9.0, 11.0, 13.0]);
}

#[test]
fn sample_accounting_matches_issued_work() {
    let profile = HeterogeneityProfile::with_multipliers(0.3, vec![1.0, 2.5, 1.7]);
    for protocol in Protocol::ALL {
        let tl = schedule_run(plan(protocol, 3, 7, 2), &profile, &sync_cost(0.9)).unwrap();
        let in_intervals: u64 = tl
            .intervals
            .iter()
            .filter(|iv| iv.stream == StreamKind::Compute)
            .map(|iv| u64::from(iv.micro_batches))
            .sum();
        assert_eq!(in_intervals, tl.issued_micro_batches(), "{protocol:?}");
        assert_eq!(tl.commit_times.len(), 7);
    }
}

#[test]
fn compute_intervals_tile_the_run_without_overlap() {
    let profile = HeterogeneityProfile::with_multipliers(0.4, vec![1.0, 3.0]);
    for protocol in Protocol::ALL {
        let tl = schedule_run(plan(protocol, 2, 6, 2), &profile, &sync_cost(1.1)).unwrap();
        for w in 0..2 {
            let mut ivs: Vec<_> = tl
                .intervals
                .iter()
                .filter(|iv| iv.worker == w && iv.stream == StreamKind::Compute)
                .collect();
            ivs.sort_by(|a, b| a.start.total_cmp(&b.start));
            let mut t = 0.0;
            for iv in ivs {
                assert!((iv.start - t).abs() < 1e-12, "{protocol:?} gap at {t}");
                assert!(iv.end >= iv.start);
                t = iv.end;
            }
            assert!((t - tl.makespan).abs() < 1e-12);
        }
    }
}

#[test]
fn schedules_are_deterministic() {
    let profile = HeterogeneityProfile::with_multipliers(0.37, vec![1.3, 1.0, 2.2]);
    let cost = CostModel { alpha_s: 0.01, beta_s_per_byte: 1e-3, bytes_per_element: 8, topology_factor: 2.0 };
    for protocol in Protocol::ALL {
        let a = schedule_run(plan(protocol, 3, 9, 2), &profile, &cost).unwrap();
        let b = schedule_run(plan(protocol, 3, 9, 2), &profile, &cost).unwrap();
        assert_eq!(a, b);
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
    }
}

#[test]
fn csv_has_fixed_header_and_lf_rows() {
    let tl = schedule_run(plan(Protocol::Acco, 2, 2, 1), &HeterogeneityProfile::homogeneous(1.0), &sync_cost(2.0))
        .unwrap();
    let mut out = Vec::new();
    tl.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.split('\n');
    assert_eq!(lines.next(), Some("worker_id,stream,event_kind,t_start,t_end,micro_batches,bytes"));
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), tl.intervals.len() + 1);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row.len(), 7);
    assert_eq!(row[3].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn degenerate_plans_are_rejected() {
    let profile = HeterogeneityProfile::homogeneous(1.0);
    assert!(schedule_run(plan(Protocol::Ddp, 0, 3, 1), &profile, &CostModel::free()).is_err());
    assert!(schedule_run(plan(Protocol::Ddp, 2, 0, 1), &profile, &CostModel::free()).is_err());
    assert!(schedule_run(plan(Protocol::Acco, 2, 3, 0), &profile, &CostModel::free()).is_err());
}
