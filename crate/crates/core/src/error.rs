use thiserror::Error;

use crate::protocols::RunTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("micro-batch must contain at least one sample")]
    EmptyBatch,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shard layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("problem has no known optimum value")]
    MissingOptimum,

    #[error("worker {worker} parameters diverged from worker 0")]
    ReplicaDivergence { worker: usize },

    #[error("worker {worker} reached a barrier with an empty accumulator")]
    EmptyAccumulator { worker: usize },

    #[error("scheduler deadlock at t={time}: {state}")]
    Deadlock { time: f64, state: String },

    #[error("trace too short: need at least {need} points, got {got}")]
    TraceTooShort { need: usize, got: usize },

    #[error("too few seeds for a Monte-Carlo estimate: {got} (minimum {need})")]
    TooFewSeeds { need: usize, got: usize },

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("training diverged at update {update} (loss = {loss})")]
    Diverged {
        update: usize,
        loss: f64,
        partial: Box<RunTrace>,
    },
}
