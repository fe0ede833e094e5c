use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed;

/// `f(θ) = ½ θᵀAθ − bᵀθ` with `A` symmetric positive semi-definite.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    dim: usize,
    /// Row-major `dim × dim`.
    a: Vec<f64>,
    b: Vec<f64>,
}

pub(crate) struct QuadraticParts {
    pub quadratic: Quadratic,
    pub smoothness: f64,
    pub minimizer: Option<Vec<f64>>,
}

impl Quadratic {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[f64] {
        &self.a
    }

    pub fn linear(&self) -> &[f64] {
        &self.b
    }

    /// Builds from an explicit matrix, checking symmetry and PSD-ness.
    pub(crate) fn from_parts(dim: usize, a: Vec<f64>, b: Vec<f64>) -> Result<QuadraticParts> {
        if dim == 0 {
            return Err(Error::InvalidConfig("quadratic dimension must be positive".into()));
        }
        if a.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: a.len() });
        }
        if b.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: b.len() });
        }
        if !a.iter().chain(&b).all(|x| x.is_finite()) {
            return Err(Error::NonFinite("quadratic coefficients"));
        }
        let scale = a.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1.0);
        for i in 0..dim {
            for j in 0..i {
                if (a[i * dim + j] - a[j * dim + i]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidConfig("quadratic matrix is not symmetric".into()));
                }
            }
        }
        let m = DMatrix::from_row_slice(dim, dim, &a);
        let eig = m.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if min < -1e-10 * max.abs().max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "quadratic matrix is not positive semi-definite (min eigenvalue {min})"
            )));
        }
        if max <= 0.0 {
            return Err(Error::InvalidConfig("quadratic matrix must be nonzero".into()));
        }
        let minimizer = if min > 1e-12 * max {
            m.cholesky()
                .map(|c| c.solve(&DVector::from_column_slice(&b)).as_slice().to_vec())
        } else {
            None
        };
        Ok(QuadraticParts {
            quadratic: Quadratic { dim, a, b },
            smoothness: max,
            minimizer,
        })
    }

    /// Random instance `A = Q diag(λ) Qᵀ` with `Q` drawn from the QR
    /// factorisation of a Gaussian matrix and eigenvalues evenly spaced over
    /// `[mu, smoothness]`. The returned smoothness is the prescribed top
    /// eigenvalue, not a numerical estimate.
    pub(crate) fn random(dim: usize, mu: f64, smoothness: f64, seed: u64) -> Result<QuadraticParts> {
        if dim == 0 {
            return Err(Error::InvalidConfig("quadratic dimension must be positive".into()));
        }
        if !(mu > 0.0 && smoothness >= mu && smoothness.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < mu <= L, got mu={mu}, L={smoothness}"
            )));
        }
        let mut rng = seed::rng(seed);
        let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
        let q = g.qr().q();
        let eigen: Vec<f64> = if dim == 1 {
            vec![smoothness]
        } else {
            (0..dim)
                .map(|k| mu + (smoothness - mu) * k as f64 / (dim - 1) as f64)
                .collect()
        };
        let mut a = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let mut s = 0.0;
                for k in 0..dim {
                    s += q[(i, k)] * eigen[k] * q[(j, k)];
                }
                a[i * dim + j] = s;
            }
        }
        // exact symmetry
        for i in 0..dim {
            for j in 0..i {
                let avg = 0.5 * (a[i * dim + j] + a[j * dim + i]);
                a[i * dim + j] = avg;
                a[j * dim + i] = avg;
            }
        }
        let b: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        // θ* = Q diag(1/λ) Qᵀ b
        let mut minimizer = vec![0.0; dim];
        for k in 0..dim {
            let mut proj = 0.0;
            for j in 0..dim {
                proj += q[(j, k)] * b[j];
            }
            let coef = proj / eigen[k];
            for i in 0..dim {
                minimizer[i] += q[(i, k)] * coef;
            }
        }
        Ok(QuadraticParts {
            quadratic: Quadratic { dim, a, b },
            smoothness,
            minimizer: Some(minimizer),
        })
    }

    pub fn value_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let d = self.dim;
        let mut grad = vec![0.0; d];
        let mut quad = 0.0;
        let mut lin = 0.0;
        for i in 0..d {
            let row = &self.a[i * d..(i + 1) * d];
            let ai = row.iter().zip(theta).fold(0.0, |acc, (x, y)| acc + x * y);
            quad += theta[i] * ai;
            lin += self.b[i] * theta[i];
            grad[i] = ai - self.b[i];
        }
        (0.5 * quad - lin, grad)
    }
}
