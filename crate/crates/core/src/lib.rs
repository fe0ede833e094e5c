//! Deterministic simulator for data-parallel training protocols that overlap
//! communication with computation.
//!
//! The crate is organised by subsystem:
//!
//! - [`problems`]: desk-scale objectives (quadratic, logistic regression, a
//!   one-hidden-layer MLP) with exact and stochastic gradient oracles.
//! - [`optim`]: SGD / Adam / AdamW, learning-rate schedules and ZeRO-1 style
//!   optimizer-state sharding.
//! - [`collectives`]: all-reduce, reduce-scatter and all-gather over a
//!   simulated fabric, a ring cost model and the event-driven scheduler that
//!   co-schedules compute and communication streams.
//! - [`protocols`]: DDP, DPU, WP and ACCO as per-round state machines, and
//!   [`protocols::run_protocol`] which drives them from a schedule.
//! - [`theory`]: the Lyapunov potential, descent and rate-bound checkers, and
//!   the per-replica memory model.

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod collectives;
pub mod error;
pub mod linalg;
pub mod optim;
pub mod problems;
pub mod protocols;
pub mod seed;
pub mod theory;

pub use collectives::{
    collective_time, CollectiveKind, CostModel, EventClock, Fabric, HeterogeneityProfile, Stream,
    Timeline,
};
pub use error::{Error, Result};
pub use optim::{
    opt_step, shard_partition, sharded_opt_step, OptimizerConfig, OptimizerKind, OptimizerState,
    Schedule, ShardLayout,
};
pub use problems::{GradResult, MicroBatch, Problem, ProblemKind, Sampling};
pub use protocols::{
    run_protocol, weighted_average, Protocol, RoundRecord, RunTrace, SimConfig, WorkerState,
};
pub use theory::{lyapunov, memory_model, LyapunovParams, MemoryMethod, MemoryQuery};
