//! Desk-scale differentiable objectives with exact and stochastic gradient
//! oracles.
//!
//! Three kinds are available: a quadratic `½θᵀAθ − bᵀθ` with exact
//! smoothness and minimiser, L2-regularised logistic regression on a seeded
//! synthetic dataset, and a one-hidden-layer tanh MLP on noisy XOR.
//! Stochastic gradients are fully determined by their [`MicroBatch`]
//! descriptor.

mod config;
mod dataset;
mod logistic;
mod mlp;
mod quadratic;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use config::{InitSpec, ProblemConfig};
pub use dataset::Dataset;
pub use logistic::Logistic;
pub use mlp::{Mlp, MLP_INPUTS, MLP_MAX_PARAMS};
pub use quadratic::Quadratic;

use crate::error::{Error, Result};
use crate::{linalg, seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Quadratic,
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, PartialEq)]
enum Objective {
    Quadratic(Quadratic),
    Logistic(Logistic),
    Mlp(Mlp),
}

/// An objective `f` together with the constants the convergence theory
/// needs: smoothness `L`, the minimiser `θ*` and `f* = f(θ*)` when known, and
/// the gradient noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    objective: Objective,
    smoothness: f64,
    minimizer: Option<Vec<f64>>,
    optimum: Option<f64>,
    noise: f64,
}

/// How a micro-batch draws its randomness.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Sampling {
    /// Noise-free gradient over the whole objective.
    Full,
    /// Quadratics: Gaussian noise seeded from the value. Dataset problems:
    /// `size` indices drawn uniformly with replacement.
    Seeded(u64),
    /// Explicit sample indices (dataset problems only).
    Indices(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MicroBatch {
    pub sampling: Sampling,
    pub size: usize,
}

impl MicroBatch {
    pub fn seeded(seed: u64, size: usize) -> Self {
        MicroBatch { sampling: Sampling::Seeded(seed), size }
    }

    pub fn full(size: usize) -> Self {
        MicroBatch { sampling: Sampling::Full, size }
    }

    pub fn indices(indices: Vec<usize>) -> Self {
        let size = indices.len();
        MicroBatch { sampling: Sampling::Indices(indices), size }
    }
}

/// Mean gradient of one micro-batch and the number of samples behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct GradResult {
    pub gradient: Vec<f64>,
    pub sample_count: u64,
    pub loss: f64,
}

impl Problem {
    /// Quadratic from an explicit row-major matrix.
    pub fn quadratic(dim: usize, matrix: Vec<f64>, linear: Vec<f64>, noise: f64) -> Result<Self> {
        check_noise(noise)?;
        let parts = Quadratic::from_parts(dim, matrix, linear)?;
        Ok(Self::from_quadratic(parts, noise))
    }

    /// Random quadratic with eigenvalues spread over `[mu, smoothness]`.
    pub fn random_quadratic(dim: usize, mu: f64, smoothness: f64, noise: f64, seed: u64) -> Result<Self> {
        check_noise(noise)?;
        let parts = Quadratic::random(dim, mu, smoothness, seed)?;
        Ok(Self::from_quadratic(parts, noise))
    }

    /// `f(θ) = ½ Σ scale·θᵢ²`, the scalar test function used throughout the
    /// hand-computed examples (with `dim = 1`, `scale = 1`).
    pub fn isotropic(dim: usize, scale: f64, noise: f64) -> Result<Self> {
        let mut a = vec![0.0; dim * dim];
        for i in 0..dim {
            a[i * dim + i] = scale;
        }
        Self::quadratic(dim, a, vec![0.0; dim], noise)
    }

    fn from_quadratic(parts: quadratic::QuadraticParts, noise: f64) -> Self {
        let optimum = parts
            .minimizer
            .as_ref()
            .map(|m| parts.quadratic.value_and_grad(m).0);
        Problem {
            objective: Objective::Quadratic(parts.quadratic),
            smoothness: parts.smoothness,
            minimizer: parts.minimizer,
            optimum,
            noise,
        }
    }

    pub fn logistic(samples: usize, dim: usize, l2: f64, seed: u64) -> Result<Self> {
        Ok(Self::from_logistic(Logistic::synthetic(samples, dim, l2, seed)?))
    }

    pub fn logistic_from(data: Dataset, l2: f64) -> Result<Self> {
        Ok(Self::from_logistic(Logistic::build(data, l2)?))
    }

    fn from_logistic(parts: logistic::LogisticParts) -> Self {
        let optimum = parts
            .minimizer
            .as_ref()
            .map(|m| parts.logistic.value_and_grad_over(m, None).0);
        Problem {
            objective: Objective::Logistic(parts.logistic),
            smoothness: parts.smoothness,
            minimizer: parts.minimizer,
            optimum,
            noise: 0.0,
        }
    }

    pub fn mlp(samples: usize, hidden: usize, label_flip: f64, seed: u64) -> Result<Self> {
        if !(0.0..=0.5).contains(&label_flip) {
            return Err(Error::InvalidConfig(format!(
                "label_flip must be in [0, 0.5], got {label_flip}"
            )));
        }
        let mlp = Mlp::synthetic(samples, hidden, label_flip, seed)?;
        let smoothness = mlp.estimate_smoothness(1.0, seed);
        Ok(Problem {
            objective: Objective::Mlp(mlp),
            smoothness,
            minimizer: None,
            optimum: None,
            noise: 0.0,
        })
    }

    pub fn kind(&self) -> ProblemKind {
        match self.objective {
            Objective::Quadratic(_) => ProblemKind::Quadratic,
            Objective::Logistic(_) => ProblemKind::Logistic,
            Objective::Mlp(_) => ProblemKind::Mlp,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.objective {
            Objective::Quadratic(q) => q.dim(),
            Objective::Logistic(l) => l.dataset().features(),
            Objective::Mlp(m) => m.dim(),
        }
    }

    /// Smoothness constant: exact for quadratic and logistic problems, an
    /// estimated upper bound for the MLP.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn minimizer(&self) -> Option<&[f64]> {
        self.minimizer.as_deref()
    }

    pub fn optimum(&self) -> Option<f64> {
        self.optimum
    }

    /// Per-coordinate standard deviation of additive gradient noise
    /// (quadratics). Dataset problems are noisy only through sampling and
    /// report 0.
    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn dataset(&self) -> Option<&Dataset> {
        match &self.objective {
            Objective::Quadratic(_) => None,
            Objective::Logistic(l) => Some(l.dataset()),
            Objective::Mlp(m) => Some(m.dataset()),
        }
    }

    fn check_point(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: theta.len() });
        }
        if !linalg::all_finite(theta) {
            return Err(Error::NonFinite("parameters"));
        }
        Ok(())
    }

    /// Exact `f(θ)` and `∇f(θ)`.
    pub fn value_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_point(theta)?;
        Ok(self.eval_unchecked(theta, None))
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        self.value_and_grad(theta).map(|(v, _)| v)
    }

    pub fn grad_norm_sq(&self, theta: &[f64]) -> Result<f64> {
        self.value_and_grad(theta).map(|(_, g)| linalg::norm_sq(&g))
    }

    fn eval_unchecked(&self, theta: &[f64], indices: Option<&[usize]>) -> (f64, Vec<f64>) {
        match &self.objective {
            Objective::Quadratic(q) => q.value_and_grad(theta),
            Objective::Logistic(l) => l.value_and_grad_over(theta, indices),
            Objective::Mlp(m) => m.value_and_grad_over(theta, indices),
        }
    }

    /// Unbiased estimate of `∇f(θ)` determined entirely by `batch`.
    pub fn stochastic_grad(&self, theta: &[f64], batch: &MicroBatch) -> Result<GradResult> {
        if batch.size == 0 {
            return Err(Error::EmptyBatch);
        }
        self.check_point(theta)?;
        let (loss, gradient) = match (&self.objective, &batch.sampling) {
            (_, Sampling::Full) => self.eval_unchecked(theta, None),
            (Objective::Quadratic(q), Sampling::Seeded(s)) => {
                let (loss, mut grad) = q.value_and_grad(theta);
                if self.noise > 0.0 {
                    let mut rng = seed::rng(*s);
                    for g in &mut grad {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *g += self.noise * z;
                    }
                }
                (loss, grad)
            }
            (Objective::Quadratic(_), Sampling::Indices(_)) => {
                return Err(Error::InvalidConfig(
                    "quadratic problems draw noise from a seed, not sample indices".into(),
                ))
            }
            (_, Sampling::Seeded(s)) => {
                let n = self.dataset().map_or(0, Dataset::len);
                let mut rng = seed::rng(*s);
                let idx: Vec<usize> = (0..batch.size).map(|_| rng.random_range(0..n)).collect();
                self.eval_unchecked(theta, Some(&idx))
            }
            (_, Sampling::Indices(idx)) => {
                let n = self.dataset().map_or(0, Dataset::len);
                if idx.is_empty() {
                    return Err(Error::EmptyBatch);
                }
                if idx.len() != batch.size {
                    return Err(Error::InvalidConfig(format!(
                        "batch size {} does not match {} explicit indices",
                        batch.size,
                        idx.len()
                    )));
                }
                if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
                    return Err(Error::InvalidConfig(format!(
                        "sample index {bad} out of range for {n} samples"
                    )));
                }
                self.eval_unchecked(theta, Some(idx))
            }
        };
        debug_assert!(gradient.len() == self.dim());
        if !linalg::all_finite(&gradient) {
            return Err(Error::NonFinite("gradient"));
        }
        Ok(GradResult { gradient, sample_count: batch.size as u64, loss })
    }
}

fn check_noise(noise: f64) -> Result<()> {
    if noise >= 0.0 && noise.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("noise must be >= 0, got {noise}")))
    }
}

/// Largest coordinate-wise relative error between the analytic gradient and a
/// central difference with step `eps`. Relative errors use
/// `max(|analytic|, |numeric|, 1)` as denominator.
pub fn finite_diff_check(problem: &Problem, theta: &[f64], eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be > 0, got {eps}")));
    }
    let (_, grad) = problem.value_and_grad(theta)?;
    let mut probe = theta.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..theta.len() {
        probe[i] = theta[i] + eps;
        let up = problem.value(&probe)?;
        probe[i] = theta[i] - eps;
        let down = problem.value(&probe)?;
        probe[i] = theta[i];
        let numeric = (up - down) / (2.0 * eps);
        let denom = grad[i].abs().max(numeric.abs()).max(1.0);
        worst = worst.max((grad[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests;
