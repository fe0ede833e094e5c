//! Numerical checks of the convergence analysis and the per-replica memory
//! model.

mod memory;

pub use memory::{memory_model, floor_gb, MemoryMethod, MemoryQuery};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::problems::Problem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovParams {
    pub eta: f64,
    pub smoothness: f64,
    pub optimum: f64,
}

impl LyapunovParams {
    /// Uses the problem's own `L` and `f*`.
    pub fn for_problem(problem: &Problem, eta: f64) -> Result<Self> {
        Ok(LyapunovParams {
            eta,
            smoothness: problem.smoothness(),
            optimum: problem.optimum().ok_or(Error::MissingOptimum)?,
        })
    }

    /// Whether `η ≤ 1/(2L)`, the regime in which the bounds are claimed.
    pub fn in_regime(&self) -> bool {
        self.eta * 2.0 * self.smoothness <= 1.0 + 1e-15
    }
}

/// `V(θ, θ̃) = f(θ) − f* + ηL(f(θ̃) − f*) + L‖θ − θ̃‖²`
pub fn lyapunov(theta: &[f64], theta_tilde: &[f64], problem: &Problem, params: &LyapunovParams) -> Result<f64> {
    let f = problem.value(theta)?;
    let ft = problem.value(theta_tilde)?;
    let (eta, l, fs) = (params.eta, params.smoothness, params.optimum);
    Ok(f - fs + eta * l * (ft - fs) + l * linalg::dist_sq(theta, theta_tilde))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescentReport {
    pub steps: usize,
    /// First step `t` with `V_{t+1} − V_t` above the bound, if any.
    pub first_violation: Option<usize>,
    /// Largest `(V_{t+1} − V_t) − bound_t` seen.
    pub worst_margin: f64,
    pub pass: bool,
}

/// Slack allowed on deterministic inequalities.
pub const DETERMINISTIC_SLACK: f64 = 1e-10;

/// Checks `V_{t+1} − V_t ≤ −(η/8)(‖∇f(θ_t)‖² + ‖∇f(θ̃_t)‖²)` along a trace of
/// `(θ_t, θ̃_t)` pairs.
pub fn check_gd_descent(
    trace: &[(Vec<f64>, Vec<f64>)],
    problem: &Problem,
    params: &LyapunovParams,
) -> Result<DescentReport> {
    if trace.len() < 2 {
        return Err(Error::TraceTooShort { need: 2, got: trace.len() });
    }
    let mut v_prev = lyapunov(&trace[0].0, &trace[0].1, problem, params)?;
    let mut first_violation = None;
    let mut worst_margin = f64::NEG_INFINITY;
    for t in 0..trace.len() - 1 {
        let (theta, tilde) = &trace[t];
        let decrease = params.eta / 8.0 * (problem.grad_norm_sq(theta)? + problem.grad_norm_sq(tilde)?);
        let v_next = lyapunov(&trace[t + 1].0, &trace[t + 1].1, problem, params)?;
        let margin = (v_next - v_prev) + decrease;
        worst_margin = worst_margin.max(margin);
        if margin > DETERMINISTIC_SLACK && first_violation.is_none() {
            first_violation = Some(t);
        }
        v_prev = v_next;
    }
    Ok(DescentReport {
        steps: trace.len() - 1,
        first_violation,
        worst_margin,
        pass: first_violation.is_none(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Tolerance added to `rhs` when deciding `pass`.
    pub slack: f64,
    pub pass: bool,
}

/// Mean of `‖∇f(θ_t)‖² + ‖∇f(θ̃_t)‖²` over the first `t_len` pairs.
fn mean_grad_sum(trace: &[(Vec<f64>, Vec<f64>)], problem: &Problem, t_len: usize) -> Result<f64> {
    if t_len == 0 || trace.len() < t_len {
        return Err(Error::TraceTooShort { need: t_len.max(1), got: trace.len() });
    }
    let mut total = 0.0;
    for (theta, tilde) in &trace[..t_len] {
        total += problem.grad_norm_sq(theta)? + problem.grad_norm_sq(tilde)?;
    }
    Ok(total / t_len as f64)
}

/// Deterministic bound
/// `(1/T)Σ_{t<T}(‖∇f(θ_t)‖² + ‖∇f(θ̃_t)‖²) ≤ 8/(ηT)·(f(θ₀) + f(θ̃₀) − 2f* + L‖θ₀ − θ̃₀‖²)`.
pub fn check_prop1_bound(
    trace: &[(Vec<f64>, Vec<f64>)],
    problem: &Problem,
    params: &LyapunovParams,
    t_len: usize,
) -> Result<BoundCheck> {
    let lhs = mean_grad_sum(trace, problem, t_len)?;
    let (theta0, tilde0) = &trace[0];
    let gap = problem.value(theta0)? + problem.value(tilde0)? - 2.0 * params.optimum
        + params.smoothness * linalg::dist_sq(theta0, tilde0);
    let rhs = 8.0 / (params.eta * t_len as f64) * gap;
    Ok(BoundCheck { lhs, rhs, slack: DETERMINISTIC_SLACK, pass: lhs <= rhs + DETERMINISTIC_SLACK })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloCheck {
    pub seeds: usize,
    pub lhs_mean: f64,
    pub lhs_std_error: f64,
    pub rhs: f64,
    /// `3·SE`, added to `rhs` when deciding `pass`.
    pub slack: f64,
    pub pass: bool,
}

pub const MIN_PROP2_SEEDS: usize = 30;

/// Stochastic bound
/// `(1/T)Σ E[‖∇f(θ_t)‖² + ‖∇f(θ̃_t)‖²] ≤ 16/(ηT)·(f(θ₀) − f*) + 8σ²Lη`
/// estimated over independent traces. `sigma_sq` is the variance of the
/// gradient estimator, `E‖g − ∇f‖²`.
pub fn check_prop2_bound(
    traces: &[Vec<(Vec<f64>, Vec<f64>)>],
    problem: &Problem,
    params: &LyapunovParams,
    sigma_sq: f64,
    t_len: usize,
) -> Result<MonteCarloCheck> {
    if traces.len() < MIN_PROP2_SEEDS {
        return Err(Error::TooFewSeeds { need: MIN_PROP2_SEEDS, got: traces.len() });
    }
    let per_seed: Vec<f64> = traces
        .iter()
        .map(|tr| mean_grad_sum(tr, problem, t_len))
        .collect::<Result<_>>()?;
    let n = per_seed.len() as f64;
    let mean = per_seed.iter().sum::<f64>() / n;
    let var = per_seed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let theta0 = &traces[0][0].0;
    let rhs = 16.0 / (params.eta * t_len as f64) * (problem.value(theta0)? - params.optimum)
        + 8.0 * sigma_sq * params.smoothness * params.eta;
    let slack = 3.0 * se;
    Ok(MonteCarloCheck { seeds: traces.len(), lhs_mean: mean, lhs_std_error: se, rhs, slack, pass: mean <= rhs + slack })
}
