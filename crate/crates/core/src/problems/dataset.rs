use crate::error::{Error, Result};

/// Labelled samples with labels in `{−1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    labels: Vec<f64>,
    features: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, labels: Vec<f64>, features: usize) -> Result<Self> {
        if features == 0 || labels.is_empty() {
            return Err(Error::InvalidConfig("dataset must be non-empty".into()));
        }
        if inputs.len() != labels.len() * features {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * features,
                got: inputs.len(),
            });
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidConfig("labels must be -1 or +1".into()));
        }
        if !inputs.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("dataset inputs"));
        }
        Ok(Dataset { inputs, labels, features })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.features..(i + 1) * self.features]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub(crate) fn flat_inputs(&self) -> &[f64] {
        &self.inputs
    }
}

pub(crate) fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^u)` without overflow.
pub(crate) fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}
