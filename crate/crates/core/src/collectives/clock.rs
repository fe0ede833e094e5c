use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Logical stream. Communication sorts before computation so that a
/// collective finishing at the same instant as a micro-batch is seen first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stream {
    Comm(usize),
    Compute(usize),
}

/// Handshake flags between a worker's two streams.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadyFlags {
    pub ready_for_stage_1: bool,
    pub ready_for_stage_2: bool,
}

struct Pending<A> {
    time: f64,
    stream: Stream,
    seq: u64,
    action: A,
}

impl<A> Pending<A> {
    fn key(&self) -> (f64, Stream, u64) {
        (self.time, self.stream, self.seq)
    }
}

impl<A> PartialEq for Pending<A> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<A> Eq for Pending<A> {}
impl<A> PartialOrd for Pending<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<A> Ord for Pending<A> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        let (ta, sa, qa) = self.key();
        let (tb, sb, qb) = other.key();
        tb.total_cmp(&ta).then(sb.cmp(&sa)).then(qb.cmp(&qa))
    }
}

/// Discrete-event clock. Events pop in `(time, stream, insertion)` order and
/// time never moves backwards.
pub struct EventClock<A> {
    now: f64,
    seq: u64,
    queue: BinaryHeap<Pending<A>>,
    flags: Vec<ReadyFlags>,
}

impl<A> EventClock<A> {
    pub fn new(workers: usize) -> Self {
        EventClock { now: 0.0, seq: 0, queue: BinaryHeap::new(), flags: vec![ReadyFlags::default(); workers] }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn schedule(&mut self, time: f64, stream: Stream, action: A) -> Result<()> {
        if !time.is_finite() || time < self.now {
            return Err(Error::InvalidConfig(format!(
                "event at t={time} scheduled in the past (now {})",
                self.now
            )));
        }
        self.queue.push(Pending { time, stream, seq: self.seq, action });
        self.seq += 1;
        Ok(())
    }

    /// Time of the next event, if any.
    pub fn peek_time(&self) -> Option<f64> {
        self.queue.peek().map(|ev| ev.time)
    }

    pub fn pop(&mut self) -> Option<(f64, Stream, A)> {
        let ev = self.queue.pop()?;
        debug_assert!(ev.time >= self.now);
        self.now = ev.time;
        Some((ev.time, ev.stream, ev.action))
    }

    pub fn flags(&self, worker: usize) -> ReadyFlags {
        self.flags[worker]
    }

    pub fn flags_mut(&mut self, worker: usize) -> &mut ReadyFlags {
        &mut self.flags[worker]
    }

    pub fn set_all(&mut self, flags: ReadyFlags) {
        self.flags.iter_mut().for_each(|f| *f = flags);
    }
}
