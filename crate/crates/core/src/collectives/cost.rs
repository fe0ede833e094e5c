use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectiveKind {
    AllReduce,
    ReduceScatter,
    AllGather,
}

/// Latency/bandwidth parameters of a ring collective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    /// Seconds of fixed latency per collective.
    #[serde(default)]
    pub alpha_s: f64,
    /// Seconds per byte.
    #[serde(default)]
    pub beta_s_per_byte: f64,
    #[serde(default = "default_bytes")]
    pub bytes_per_element: u32,
    /// Multiplier on the bandwidth term (inter-node links are slower).
    #[serde(default = "default_topology")]
    pub topology_factor: f64,
}

fn default_bytes() -> u32 {
    8
}
fn default_topology() -> f64 {
    1.0
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::free()
    }
}

impl CostModel {
    /// Instantaneous communication.
    pub fn free() -> Self {
        CostModel { alpha_s: 0.0, beta_s_per_byte: 0.0, bytes_per_element: 8, topology_factor: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_s >= 0.0 && self.alpha_s.is_finite())
            || !(self.beta_s_per_byte >= 0.0 && self.beta_s_per_byte.is_finite())
        {
            return Err(Error::InvalidConfig("alpha_s and beta_s_per_byte must be >= 0".into()));
        }
        if self.bytes_per_element == 0 {
            return Err(Error::InvalidConfig("bytes_per_element must be positive".into()));
        }
        if !(self.topology_factor > 0.0 && self.topology_factor.is_finite()) {
            return Err(Error::InvalidConfig("topology_factor must be > 0".into()));
        }
        Ok(())
    }

    /// Bytes one worker sends during a ring collective over `elements`.
    pub fn ring_bytes(&self, kind: CollectiveKind, elements: usize, workers: usize) -> f64 {
        if workers <= 1 {
            return 0.0;
        }
        let passes = match kind {
            CollectiveKind::AllReduce => 2.0,
            CollectiveKind::ReduceScatter | CollectiveKind::AllGather => 1.0,
        };
        passes * (elements as f64 * self.bytes_per_element as f64) * (workers - 1) as f64 / workers as f64
    }

    /// One sharded optimizer synchronisation: reduce-scatter of the gradient
    /// followed by all-gather of the parameters. Sample counts ride along
    /// with the gradient payload.
    pub fn sync_time(&self, elements: usize, workers: usize) -> f64 {
        collective_time(CollectiveKind::ReduceScatter, elements, workers, self)
            + collective_time(CollectiveKind::AllGather, elements, workers, self)
    }

    pub fn sync_bytes(&self, elements: usize, workers: usize) -> f64 {
        self.ring_bytes(CollectiveKind::ReduceScatter, elements, workers)
            + self.ring_bytes(CollectiveKind::AllGather, elements, workers)
    }
}

/// Ring accounting: all-reduce costs `α + 2β·f·bytes·(N−1)/N`, reduce-scatter
/// and all-gather `α + β·f·bytes·(N−1)/N`. A single worker communicates for
/// free.
pub fn collective_time(kind: CollectiveKind, elements: usize, workers: usize, model: &CostModel) -> f64 {
    if workers <= 1 {
        return 0.0;
    }
    model.alpha_s + model.beta_s_per_byte * model.topology_factor * model.ring_bytes(kind, elements, workers)
}

/// Per-worker compute speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeterogeneityProfile {
    /// Nominal seconds to compute one micro-batch gradient.
    pub compute_s_per_microbatch: f64,
    /// Slowdown per worker; 1.0 is nominal. Empty means all nominal.
    #[serde(default)]
    pub worker_multipliers: Vec<f64>,
}

impl HeterogeneityProfile {
    pub fn homogeneous(seconds: f64) -> Self {
        HeterogeneityProfile { compute_s_per_microbatch: seconds, worker_multipliers: Vec::new() }
    }

    pub fn with_multipliers(seconds: f64, multipliers: Vec<f64>) -> Self {
        HeterogeneityProfile { compute_s_per_microbatch: seconds, worker_multipliers: multipliers }
    }

    pub fn validate(&self, workers: usize) -> Result<()> {
        if !(self.compute_s_per_microbatch > 0.0 && self.compute_s_per_microbatch.is_finite()) {
            return Err(Error::InvalidConfig("compute_s_per_microbatch must be > 0".into()));
        }
        if !self.worker_multipliers.is_empty() && self.worker_multipliers.len() != workers {
            return Err(Error::InvalidConfig(format!(
                "{} worker multipliers for {workers} workers",
                self.worker_multipliers.len()
            )));
        }
        if self.worker_multipliers.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidConfig("worker multipliers must be > 0".into()));
        }
        Ok(())
    }

    pub fn micro_batch_time(&self, worker: usize) -> f64 {
        let m = self.worker_multipliers.get(worker).copied().unwrap_or(1.0);
        self.compute_s_per_microbatch * m
    }
}
