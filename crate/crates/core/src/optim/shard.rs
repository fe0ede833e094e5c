use super::{OptimizerConfig, OptimizerState};
use crate::collectives::Fabric;
use crate::error::{Error, Result};

/// Contiguous, sorted, disjoint ranges covering `[0, dim)`, one per worker.
/// Trailing ranges may be empty when there are more workers than
/// coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardLayout {
    dim: usize,
    ranges: Vec<(usize, usize)>,
}

impl ShardLayout {
    pub fn new(dim: usize, ranges: Vec<(usize, usize)>) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::LayoutMismatch("layout needs at least one range".into()));
        }
        let mut cursor = 0;
        for &(lo, hi) in &ranges {
            if lo != cursor || hi < lo {
                return Err(Error::LayoutMismatch(format!(
                    "range [{lo}, {hi}) does not continue from {cursor}"
                )));
            }
            cursor = hi;
        }
        if cursor != dim {
            return Err(Error::LayoutMismatch(format!("ranges cover [0, {cursor}), expected [0, {dim})")));
        }
        Ok(ShardLayout { dim, ranges })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn workers(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &[(usize, usize)] {
        &self.ranges
    }

    pub fn range(&self, worker: usize) -> std::ops::Range<usize> {
        let (lo, hi) = self.ranges[worker];
        lo..hi
    }

    /// Splits a full vector into per-worker shards.
    pub fn split(&self, full: &[f64]) -> Result<Vec<Vec<f64>>> {
        if full.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: full.len() });
        }
        Ok(self.ranges.iter().map(|&(lo, hi)| full[lo..hi].to_vec()).collect())
    }

    /// Fresh optimizer states, one per shard.
    pub fn states(&self, cfg: &OptimizerConfig) -> Vec<OptimizerState> {
        self.ranges.iter().map(|&(lo, hi)| OptimizerState::new(cfg.kind, lo, hi)).collect()
    }
}

/// Near-equal contiguous split: the first `dim % workers` ranges get one
/// extra coordinate. `workers > dim` is allowed and yields empty trailing
/// ranges.
pub fn shard_partition(dim: usize, workers: usize) -> Result<ShardLayout> {
    if dim == 0 || workers == 0 {
        return Err(Error::InvalidConfig(format!(
            "shard_partition needs d >= 1 and N >= 1, got d={dim}, N={workers}"
        )));
    }
    let base = dim / workers;
    let extra = dim % workers;
    let mut ranges = Vec::with_capacity(workers);
    let mut lo = 0;
    for i in 0..workers {
        let hi = lo + base + usize::from(i < extra);
        ranges.push((lo, hi));
        lo = hi;
    }
    ShardLayout::new(dim, ranges)
}

/// ZeRO-1 update: worker `i` steps its own shard of `theta` with its reduced
/// gradient shard and state, then the shards are all-gathered.
///
/// `reduced_grad_shards[i]` must already be the averaged gradient restricted
/// to `layout.range(i)`.
pub fn sharded_opt_step(
    states: &mut [OptimizerState],
    theta: &[f64],
    reduced_grad_shards: &[Vec<f64>],
    cfg: &OptimizerConfig,
    layout: &ShardLayout,
    fabric: &mut Fabric,
) -> Result<Vec<f64>> {
    let n = layout.workers();
    if states.len() != n || reduced_grad_shards.len() != n {
        return Err(Error::LayoutMismatch(format!(
            "{} states and {} gradient shards for {n} workers",
            states.len(),
            reduced_grad_shards.len()
        )));
    }
    if theta.len() != layout.dim() {
        return Err(Error::DimensionMismatch { expected: layout.dim(), got: theta.len() });
    }
    let mut shards = Vec::with_capacity(n);
    for (i, state) in states.iter_mut().enumerate() {
        let range = layout.range(i);
        if state.covers != (range.start, range.end) {
            return Err(Error::LayoutMismatch(format!(
                "worker {i} state covers {:?}, layout expects {:?}",
                state.covers, range
            )));
        }
        let mut slice = theta[range].to_vec();
        state.apply(&mut slice, &reduced_grad_shards[i], cfg)?;
        shards.push(slice);
    }
    let mut gathered = fabric.all_gather(&shards, layout)?;
    Ok(gathered.swap_remove(0))
}
