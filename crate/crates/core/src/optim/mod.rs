//! Optimizer family (SGD, Adam, AdamW) and ZeRO-1 style state sharding.
//!
//! [`OptimizerState`] covers a contiguous slice `[lo, hi)` of the parameter
//! vector, so the same code runs both the unsharded optimizer (one state over
//! `[0, d)`) and one shard of a [`ShardLayout`].

mod shard;

use serde::{Deserialize, Serialize};

pub use shard::{shard_partition, sharded_opt_step, ShardLayout};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Adamw,
}

/// Learning-rate schedule. Steps count committed parameter updates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    #[default]
    Constant,
    /// Cosine decay from the peak rate to `min_lr` at `total_steps`.
    Cosine { total_steps: u64, #[serde(default)] min_lr: f64 },
}

/// Field names follow the usual training-script hyperparameter names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(rename = "name")]
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_epsilon: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default, rename = "scheduler")]
    pub schedule: Schedule,
    #[serde(default)]
    pub n_warmup_steps: u64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate,
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_epsilon: default_eps(),
            weight_decay: 0.0,
            schedule: Schedule::Constant,
            n_warmup_steps: 0,
        }
    }

    pub fn adam(learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            adam_beta1: beta1,
            adam_beta2: beta2,
            ..Self::sgd(learning_rate)
        }
    }

    pub fn adamw(learning_rate: f64, beta1: f64, beta2: f64, weight_decay: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adamw,
            weight_decay,
            ..Self::adam(learning_rate, beta1, beta2)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad(format!(
                "adam betas must lie in [0, 1), got ({}, {})",
                self.adam_beta1, self.adam_beta2
            ));
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            return bad(format!("adam_epsilon must be > 0, got {}", self.adam_epsilon));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if let Schedule::Cosine { total_steps, min_lr } = self.schedule {
            if total_steps <= self.n_warmup_steps {
                return bad("cosine total_steps must exceed n_warmup_steps".into());
            }
            if !(0.0..=self.learning_rate).contains(&min_lr) {
                return bad(format!("min_lr must lie in [0, learning_rate], got {min_lr}"));
            }
        }
        Ok(())
    }

    /// Learning rate for the update that takes the optimizer from `step` to
    /// `step + 1`. Warmup is linear from 0.
    pub fn lr_at(&self, step: u64) -> f64 {
        let peak = self.learning_rate;
        if step < self.n_warmup_steps {
            return peak * step as f64 / self.n_warmup_steps as f64;
        }
        match self.schedule {
            Schedule::Constant => peak,
            Schedule::Cosine { total_steps, min_lr } => {
                let span = (total_steps - self.n_warmup_steps) as f64;
                let progress = ((step - self.n_warmup_steps) as f64 / span).min(1.0);
                min_lr + 0.5 * (peak - min_lr) * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

/// Step count and moments for the parameter range `[lo, hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<f64>,
    /// Second moments; `None` for SGD.
    pub v: Option<Vec<f64>>,
    pub covers: (usize, usize),
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lo: usize, hi: usize) -> Self {
        let len = hi - lo;
        OptimizerState {
            step: 0,
            m: match kind {
                OptimizerKind::Sgd => Vec::new(),
                _ => vec![0.0; len],
            },
            v: match kind {
                OptimizerKind::Sgd => None,
                _ => Some(vec![0.0; len]),
            },
            covers: (lo, hi),
        }
    }

    pub fn len(&self) -> usize {
        self.covers.1 - self.covers.0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Applies one step in place.
    pub fn apply(&mut self, theta: &mut [f64], grad: &[f64], cfg: &OptimizerConfig) -> Result<()> {
        let len = self.len();
        if theta.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: theta.len() });
        }
        if grad.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: grad.len() });
        }
        if !linalg::all_finite(theta) {
            return Err(Error::NonFinite("optimizer parameters"));
        }
        if !linalg::all_finite(grad) {
            return Err(Error::NonFinite("optimizer gradient"));
        }
        let lr = cfg.lr_at(self.step);
        let wd = cfg.weight_decay;
        match cfg.kind {
            OptimizerKind::Sgd => {
                for (t, g) in theta.iter_mut().zip(grad) {
                    *t -= lr * (g + wd * *t);
                }
            }
            OptimizerKind::Adam | OptimizerKind::Adamw => {
                let (b1, b2, eps) = (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
                let t = (self.step + 1) as i32;
                let bc1 = 1.0 - b1.powi(t);
                let bc2 = 1.0 - b2.powi(t);
                let v = self
                    .v
                    .as_mut()
                    .ok_or_else(|| Error::InvalidConfig("adam step on an sgd state".into()))?;
                if self.m.len() != len {
                    return Err(Error::DimensionMismatch { expected: len, got: self.m.len() });
                }
                let decoupled = cfg.kind == OptimizerKind::Adamw;
                for i in 0..len {
                    let g = if decoupled { grad[i] } else { grad[i] + wd * theta[i] };
                    self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
                    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                    let update = (self.m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
                    if decoupled {
                        theta[i] = theta[i] * (1.0 - lr * wd) - lr * update;
                    } else {
                        theta[i] -= lr * update;
                    }
                }
            }
        }
        self.step += 1;
        Ok(())
    }
}

/// Pure form of [`OptimizerState::apply`].
pub fn opt_step(
    state: &OptimizerState,
    theta: &[f64],
    grad: &[f64],
    cfg: &OptimizerConfig,
) -> Result<(OptimizerState, Vec<f64>)> {
    let mut next = state.clone();
    let mut out = theta.to_vec();
    next.apply(&mut out, grad, cfg)?;
    Ok((next, out))
}
