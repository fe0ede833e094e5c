use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Problem;
use crate::error::{Error, Result};
use crate::seed;

/// Serializable problem description; datasets are always regenerated from
/// the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProblemConfig {
    Quadratic {
        dim: usize,
        /// Explicit row-major matrix; when absent a random instance with
        /// eigenvalues in `[mu, smoothness]` is generated.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        linear: Option<Vec<f64>>,
        #[serde(default = "default_mu")]
        mu: f64,
        #[serde(default = "default_smoothness")]
        smoothness: f64,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    Logistic {
        samples: usize,
        dim: usize,
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default)]
        seed: u64,
    },
    Mlp {
        samples: usize,
        hidden: usize,
        #[serde(default = "default_flip")]
        label_flip: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_mu() -> f64 {
    0.1
}
fn default_smoothness() -> f64 {
    1.0
}
fn default_l2() -> f64 {
    1e-3
}
fn default_flip() -> f64 {
    0.05
}

impl ProblemConfig {
    pub fn build(&self) -> Result<Problem> {
        match self {
            ProblemConfig::Quadratic { dim, matrix, linear, mu, smoothness, noise, seed } => {
                match matrix {
                    Some(a) => Problem::quadratic(
                        *dim,
                        a.clone(),
                        linear.clone().unwrap_or_else(|| vec![0.0; *dim]),
                        *noise,
                    ),
                    None if linear.is_some() => Err(Error::InvalidConfig(
                        "`linear` requires an explicit `matrix`".into(),
                    )),
                    None => Problem::random_quadratic(*dim, *mu, *smoothness, *noise, *seed),
                }
            }
            ProblemConfig::Logistic { samples, dim, l2, seed } => {
                Problem::logistic(*samples, *dim, *l2, *seed)
            }
            ProblemConfig::Mlp { samples, hidden, label_flip, seed } => {
                Problem::mlp(*samples, *hidden, *label_flip, *seed)
            }
        }
    }
}

/// Initial parameters `θ₀` (and `θ̃₀ = θ₀`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitSpec {
    Constant { value: f64 },
    Gaussian { scale: f64, seed: u64 },
    Explicit { values: Vec<f64> },
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Constant { value: 1.0 }
    }
}

impl InitSpec {
    pub fn materialize(&self, dim: usize) -> Result<Vec<f64>> {
        let theta = match self {
            InitSpec::Constant { value } => vec![*value; dim],
            InitSpec::Gaussian { scale, seed } => {
                let mut rng = seed::rng(seed::derive(&[*seed, 0x1417]));
                (0..dim)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        scale * z
                    })
                    .collect()
            }
            InitSpec::Explicit { values } => {
                if values.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: values.len() });
                }
                values.clone()
            }
        };
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("initial parameters"));
        }
        Ok(theta)
    }
}
