//! Simulated communication fabric, ring cost model and the event-driven
//! scheduler that co-schedules each worker's compute and communication
//! streams.

mod clock;
mod cost;
mod fabric;
mod schedule;

pub use clock::{EventClock, ReadyFlags, Stream};
pub use cost::{collective_time, CollectiveKind, CostModel, HeterogeneityProfile};
pub use fabric::{CommStats, Fabric};
pub use schedule::{schedule_run, Interval, IntervalKind, SchedulePlan, StreamKind, Timeline};

#[cfg(test)]
mod tests;
