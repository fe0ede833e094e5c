use rand::Rng;

use super::dataset::{sigmoid, softplus, Dataset};
use crate::error::{Error, Result};
use crate::linalg;
use crate::seed;

/// Input dimension of the synthetic XOR task.
pub const MLP_INPUTS: usize = 2;
/// Hard cap on trainable parameters.
pub const MLP_MAX_PARAMS: usize = 200;

/// One hidden tanh layer and a scalar logit, trained with the logistic loss.
///
/// Parameter layout: `W1` (hidden × inputs, row-major), `b1` (hidden),
/// `w2` (hidden), `b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    data: Dataset,
    hidden: usize,
}

impl Mlp {
    pub fn param_count(hidden: usize, inputs: usize) -> usize {
        hidden * (inputs + 2) + 1
    }

    pub(crate) fn new(data: Dataset, hidden: usize) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidConfig("mlp needs at least one hidden unit".into()));
        }
        let params = Self::param_count(hidden, data.features());
        if params > MLP_MAX_PARAMS {
            return Err(Error::InvalidConfig(format!(
                "mlp has {params} parameters, limit is {MLP_MAX_PARAMS}"
            )));
        }
        Ok(Mlp { data, hidden })
    }

    /// Noisy XOR on the unit square: `y = sign(x₀·x₁)`, each label flipped
    /// with probability `flip`.
    pub(crate) fn synthetic(n: usize, hidden: usize, flip: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("mlp dataset needs n >= 1".into()));
        }
        let mut rng = seed::rng(seed::derive(&[seed, 0x31_9e]));
        let mut inputs = Vec::with_capacity(n * MLP_INPUTS);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x0: f64 = rng.random_range(-1.0..1.0);
            let x1: f64 = rng.random_range(-1.0..1.0);
            let mut y = if x0 * x1 >= 0.0 { 1.0 } else { -1.0 };
            if rng.random::<f64>() < flip {
                y = -y;
            }
            inputs.push(x0);
            inputs.push(x1);
            labels.push(y);
        }
        Self::new(Dataset::new(inputs, labels, MLP_INPUTS)?, hidden)
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn dim(&self) -> usize {
        Self::param_count(self.hidden, self.data.features())
    }

    fn sample_loss_grad(&self, theta: &[f64], i: usize, grad: &mut [f64], act: &mut [f64]) -> f64 {
        let h = self.hidden;
        let din = self.data.features();
        let (w1, rest) = theta.split_at(h * din);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let x = self.data.input(i);
        let y = self.data.label(i);

        let mut out = b2[0];
        for k in 0..h {
            let z = linalg::dot(&w1[k * din..(k + 1) * din], x) + b1[k];
            act[k] = z.tanh();
            out += w2[k] * act[k];
        }
        let margin = y * out;
        let dout = -y * sigmoid(-margin);

        let (gw1, grest) = grad.split_at_mut(h * din);
        let (gb1, grest) = grest.split_at_mut(h);
        let (gw2, gb2) = grest.split_at_mut(h);
        gb2[0] += dout;
        for k in 0..h {
            gw2[k] += dout * act[k];
            let dz = dout * w2[k] * (1.0 - act[k] * act[k]);
            gb1[k] += dz;
            linalg::axpy(dz, x, &mut gw1[k * din..(k + 1) * din]);
        }
        softplus(-margin)
    }

    pub fn value_and_grad_over(&self, theta: &[f64], indices: Option<&[usize]>) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; theta.len()];
        let mut act = vec![0.0; self.hidden];
        let mut loss = 0.0;
        let count = match indices {
            Some(idx) => {
                for &i in idx {
                    loss += self.sample_loss_grad(theta, i, &mut grad, &mut act);
                }
                idx.len()
            }
            None => {
                for i in 0..self.data.len() {
                    loss += self.sample_loss_grad(theta, i, &mut grad, &mut act);
                }
                self.data.len()
            }
        };
        let inv = 1.0 / count as f64;
        linalg::scale(inv, &mut grad);
        (loss * inv, grad)
    }

    /// Upper estimate of the gradient Lipschitz constant: power iteration on
    /// finite-difference Hessian-vector products at a few random points in a
    /// box of half-width `radius`, doubled.
    pub(crate) fn estimate_smoothness(&self, radius: f64, seed: u64) -> f64 {
        let d = self.dim();
        let mut rng = seed::rng(seed::derive(&[seed, 0x5_0007]));
        let h = 1e-5;
        let mut best = 0.0_f64;
        for _ in 0..4 {
            let center: Vec<f64> = (0..d).map(|_| rng.random_range(-radius..radius)).collect();
            let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut lambda = 0.0;
            for _ in 0..30 {
                let n = linalg::norm_sq(&v).sqrt();
                if n == 0.0 {
                    break;
                }
                linalg::scale(1.0 / n, &mut v);
                let mut plus = center.clone();
                let mut minus = center.clone();
                linalg::axpy(h, &v, &mut plus);
                linalg::axpy(-h, &v, &mut minus);
                let (_, gp) = self.value_and_grad_over(&plus, None);
                let (_, gm) = self.value_and_grad_over(&minus, None);
                let hv: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
                lambda = linalg::norm_sq(&hv).sqrt();
                v = hv;
            }
            best = best.max(lambda);
        }
        2.0 * best
    }
}
