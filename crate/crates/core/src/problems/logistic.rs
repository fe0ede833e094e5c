use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dataset::{sigmoid, softplus, Dataset};
use crate::error::{Error, Result};
use crate::linalg;
use crate::seed;

/// L2-regularised logistic regression, `f(θ) = mean softplus(−y xᵀθ) + ½λ‖θ‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    data: Dataset,
    l2: f64,
}

pub(crate) struct LogisticParts {
    pub logistic: Logistic,
    pub smoothness: f64,
    pub minimizer: Option<Vec<f64>>,
}

impl Logistic {
    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub(crate) fn build(data: Dataset, l2: f64) -> Result<LogisticParts> {
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(Error::InvalidConfig(format!("l2 must be >= 0, got {l2}")));
        }
        let d = data.features();
        let n = data.len();
        let x = DMatrix::from_row_slice(n, d, data.flat_inputs());
        let gram = x.transpose() * &x;
        let top = gram.symmetric_eigen().eigenvalues.max().max(0.0);
        let smoothness = top / (4.0 * n as f64) + l2;
        let logistic = Logistic { data, l2 };
        let minimizer = if l2 > 0.0 { logistic.newton_minimizer() } else { None };
        Ok(LogisticParts { logistic, smoothness, minimizer })
    }

    /// Gaussian features, labels from a random linear teacher with a little
    /// label noise.
    pub(crate) fn synthetic(n: usize, d: usize, l2: f64, seed: u64) -> Result<LogisticParts> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidConfig("logistic problem needs n >= 1 and d >= 1".into()));
        }
        let mut rng = seed::rng(seed::derive(&[seed, 0x10_6157]));
        let teacher: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut inputs = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let noise: f64 = StandardNormal.sample(&mut rng);
            let z = linalg::dot(&x, &teacher) + 0.5 * noise;
            labels.push(if z >= 0.0 { 1.0 } else { -1.0 });
            inputs.extend(x);
        }
        // keep at least one of each label so the problem is not degenerate
        if n >= 2 && labels.iter().all(|&y| y == labels[0]) {
            labels[rng.random_range(0..n)] *= -1.0;
        }
        Self::build(Dataset::new(inputs, labels, d)?, l2)
    }

    fn sample_loss_grad(&self, theta: &[f64], i: usize, grad: &mut [f64]) -> f64 {
        let x = self.data.input(i);
        let y = self.data.label(i);
        let margin = y * linalg::dot(x, theta);
        let w = -y * sigmoid(-margin);
        linalg::axpy(w, x, grad);
        softplus(-margin)
    }

    /// Mean loss and gradient over `indices` (`None` = whole dataset).
    pub fn value_and_grad_over(&self, theta: &[f64], indices: Option<&[usize]>) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; theta.len()];
        let mut loss = 0.0;
        let count = match indices {
            Some(idx) => {
                for &i in idx {
                    loss += self.sample_loss_grad(theta, i, &mut grad);
                }
                idx.len()
            }
            None => {
                for i in 0..self.data.len() {
                    loss += self.sample_loss_grad(theta, i, &mut grad);
                }
                self.data.len()
            }
        };
        let inv = 1.0 / count as f64;
        linalg::scale(inv, &mut grad);
        loss *= inv;
        if self.l2 > 0.0 {
            linalg::axpy(self.l2, theta, &mut grad);
            loss += 0.5 * self.l2 * linalg::norm_sq(theta);
        }
        (loss, grad)
    }

    fn newton_minimizer(&self) -> Option<Vec<f64>> {
        let d = self.data.features();
        let n = self.data.len() as f64;
        let mut theta = vec![0.0; d];
        for _ in 0..100 {
            let (_, g) = self.value_and_grad_over(&theta, None);
            if linalg::norm_sq(&g).sqrt() < 1e-13 {
                return Some(theta);
            }
            let mut h = DMatrix::<f64>::identity(d, d) * self.l2;
            for i in 0..self.data.len() {
                let x = self.data.input(i);
                let s = sigmoid(linalg::dot(x, &theta));
                let w = s * (1.0 - s) / n;
                let xv = DVector::from_column_slice(x);
                h += &xv * xv.transpose() * w;
            }
            let step = h.cholesky()?.solve(&DVector::from_column_slice(&g));
            for (t, s) in theta.iter_mut().zip(step.iter()) {
                *t -= s;
            }
        }
        let (_, g) = self.value_and_grad_over(&theta, None);
        (linalg::norm_sq(&g).sqrt() < 1e-10).then_some(theta)
    }
}
