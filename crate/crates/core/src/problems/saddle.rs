use rand::Rng;
use rand_distr::StandardNormal;

use super::Objective;
use crate::error::{check_finite, check_len, Error, Result};
use crate::optim::ParamVector;

/// `L(θ) = ½ Σ H_i θ_i²` with gradient noise of covariance `diag(|H_i|)/B`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticSaddle {
    eigenvalues: Vec<f64>,
    batch_size: usize,
    noise_std: Vec<f64>,
    /// When false the stochastic gradient is the exact linear field.
    pub noise: bool,
}

impl QuadraticSaddle {
    pub fn new(eigenvalues: Vec<f64>, batch_size: usize) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidDimension("saddle needs at least one direction".into()));
        }
        check_finite("eigenvalues", &eigenvalues)?;
        if batch_size == 0 {
            return Err(Error::InvalidBatch { batch: 0, samples: 0 });
        }
        let noise_std = eigenvalues
            .iter()
            .map(|h| (h.abs() / batch_size as f64).sqrt())
            .collect();
        Ok(QuadraticSaddle {
            eigenvalues,
            batch_size,
            noise_std,
            noise: true,
        })
    }

    pub fn without_noise(mut self) -> Self {
        self.noise = false;
        self
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// `diag(H) θ + ξ`.
    pub fn stochastic_grad<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Result<ParamVector> {
        check_len(self.eigenvalues.len(), theta.len())?;
        check_finite("parameters", theta)?;
        let mut out = vec![0.0; theta.len()];
        self.stochastic_grad_into(theta, rng, &mut out);
        Ok(out.into())
    }

    /// Inner-loop variant; assumes matching lengths.
    #[inline]
    pub fn stochastic_grad_into<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R, out: &mut [f64]) {
        for i in 0..out.len() {
            let mut g = self.eigenvalues[i] * theta[i];
            if self.noise {
                let z: f64 = rng.sample(StandardNormal);
                g += self.noise_std[i] * z;
            }
            out[i] = g;
        }
    }
}

impl Objective for QuadraticSaddle {
    fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        check_len(self.dim(), theta.len())?;
        Ok(0.5 * self.eigenvalues.iter().zip(theta).map(|(h, t)| h * t * t).sum::<f64>())
    }

    fn grad(&self, theta: &[f64]) -> Result<ParamVector> {
        check_len(self.dim(), theta.len())?;
        Ok(self
            .eigenvalues
            .iter()
            .zip(theta)
            .map(|(h, t)| h * t)
            .collect::<Vec<_>>()
            .into())
    }

    fn hessian_diag(&self, theta: &[f64]) -> Result<ParamVector> {
        check_len(self.dim(), theta.len())?;
        Ok(self.eigenvalues.clone().into())
    }
}
