use crate::error::{Error, Result};
use crate::optim::ShardLayout;

/// Call and traffic counters, in elements sent per worker under ring
/// accounting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommStats {
    pub all_reduce_calls: u64,
    pub reduce_scatter_calls: u64,
    pub all_gather_calls: u64,
    pub elements_sent: f64,
}

/// In-process stand-in for a process group of `workers` ranks. Every
/// collective takes one input per rank (index = rank) and returns one output
/// per rank. Reductions sum in ascending rank order.
#[derive(Debug, Clone)]
pub struct Fabric {
    workers: usize,
    stats: CommStats,
}

impl Fabric {
    pub fn new(workers: usize) -> Self {
        assert!(workers >= 1, "fabric needs at least one worker");
        Fabric { workers, stats: CommStats::default() }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn stats(&self) -> &CommStats {
        &self.stats
    }

    fn ring_share(&self) -> f64 {
        (self.workers - 1) as f64 / self.workers as f64
    }

    fn check_inputs<T>(&self, inputs: &[T]) -> Result<()> {
        if inputs.len() != self.workers {
            return Err(Error::LayoutMismatch(format!(
                "{} inputs for a fabric of {} workers",
                inputs.len(),
                self.workers
            )));
        }
        Ok(())
    }

    fn sum(inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let d = inputs[0].len();
        let mut out = vec![0.0; d];
        for v in inputs {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
            for (o, x) in out.iter_mut().zip(v) {
                *o += x;
            }
        }
        Ok(out)
    }

    /// Elementwise sum replicated to every worker.
    pub fn all_reduce(&mut self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_inputs(inputs)?;
        let total = Self::sum(inputs)?;
        self.stats.all_reduce_calls += 1;
        self.stats.elements_sent += 2.0 * self.ring_share() * total.len() as f64;
        Ok(vec![total; self.workers])
    }

    /// Integer sum (sample counts) replicated to every worker.
    pub fn all_reduce_counts(&mut self, inputs: &[u64]) -> Result<Vec<u64>> {
        self.check_inputs(inputs)?;
        let total = inputs.iter().sum();
        self.stats.all_reduce_calls += 1;
        self.stats.elements_sent += 2.0 * self.ring_share();
        Ok(vec![total; self.workers])
    }

    /// Worker `i` receives the elementwise sum restricted to `layout.range(i)`.
    pub fn reduce_scatter(&mut self, inputs: &[Vec<f64>], layout: &ShardLayout) -> Result<Vec<Vec<f64>>> {
        self.check_inputs(inputs)?;
        if layout.workers() != self.workers {
            return Err(Error::LayoutMismatch(format!(
                "layout has {} ranges for {} workers",
                layout.workers(),
                self.workers
            )));
        }
        if inputs[0].len() != layout.dim() {
            return Err(Error::LayoutMismatch(format!(
                "inputs have {} elements, layout covers {}",
                inputs[0].len(),
                layout.dim()
            )));
        }
        let total = Self::sum(inputs)?;
        self.stats.reduce_scatter_calls += 1;
        self.stats.elements_sent += self.ring_share() * total.len() as f64;
        Ok((0..self.workers).map(|i| total[layout.range(i)].to_vec()).collect())
    }

    /// Concatenates shards in layout order and replicates the result.
    pub fn all_gather(&mut self, shards: &[Vec<f64>], layout: &ShardLayout) -> Result<Vec<Vec<f64>>> {
        self.check_inputs(shards)?;
        if layout.workers() != self.workers {
            return Err(Error::LayoutMismatch(format!(
                "layout has {} ranges for {} workers",
                layout.workers(),
                self.workers
            )));
        }
        let mut full = Vec::with_capacity(layout.dim());
        for (i, shard) in shards.iter().enumerate() {
            let want = layout.range(i).len();
            if shard.len() != want {
                return Err(Error::LayoutMismatch(format!(
                    "worker {i} shard has {} elements, layout expects {want}",
                    shard.len()
                )));
            }
            full.extend_from_slice(shard);
        }
        self.stats.all_gather_calls += 1;
        self.stats.elements_sent += self.ring_share() * full.len() as f64;
        Ok(vec![full; self.workers])
    }
}
