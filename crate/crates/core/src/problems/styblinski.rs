use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Objective};
use crate::error::{check_finite, check_len, Error, Result};
use crate::optim::ParamVector;

/// One-dimensional Styblinski–Tang term `½(u⁴ - 16u² + 5u)`.
#[inline]
pub fn st_f(u: f64) -> f64 {
    let u2 = u * u;
    0.5 * (u2 * u2 - 16.0 * u2 + 5.0 * u)
}

#[inline]
pub fn st_df(u: f64) -> f64 {
    2.0 * u * u * u - 16.0 * u + 2.5
}

#[inline]
pub fn st_d2f(u: f64) -> f64 {
    6.0 * u * u - 16.0
}

/// Per-coordinate global minimum `a` and the boundary point `b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoints {
    pub a: f64,
    pub b: f64,
}

pub fn critical_points() -> CriticalPoints {
    CriticalPoints {
        a: -2.903534,
        b: 0.156731,
    }
}

/// How minibatch indices are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    WithReplacement,
    /// Distinct indices visited in increasing order; with `B = N` this is
    /// the full-batch gradient bit for bit.
    WithoutReplacement,
}

/// `L(θ) = (1/N) Σ_j f(√k θ - x_j)` with `f` summed over coordinates.
#[derive(Clone, Debug)]
pub struct StyblinskiTang {
    data: Arc<Dataset>,
    k: f64,
    sqrt_k: f64,
    pub sampling: Sampling,
}

impl StyblinskiTang {
    pub fn new(data: Arc<Dataset>, k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sharpness factor must be positive, got {k}"
            )));
        }
        Ok(StyblinskiTang {
            data,
            k,
            sqrt_k: k.sqrt(),
            sampling: Sampling::WithReplacement,
        })
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        check_len(self.data.dim, theta.len())?;
        check_finite("parameters", theta)
    }

    #[inline]
    fn accumulate(&self, theta: &[f64], j: usize, acc: &mut [f64]) {
        for ((a, &t), &x) in acc.iter_mut().zip(theta).zip(self.data.row(j)) {
            *a += st_df(self.sqrt_k * t - x);
        }
    }

    fn finish(&self, acc: &mut [f64], count: usize) {
        let scale = self.sqrt_k / count as f64;
        for a in acc.iter_mut() {
            *a *= scale;
        }
    }

    /// Gradient of the single-sample loss `L_j`.
    pub fn sample_grad(&self, theta: &[f64], j: usize) -> Result<ParamVector> {
        self.check(theta)?;
        if j >= self.data.n_samples {
            return Err(Error::Index(format!("sample {j} of {}", self.data.n_samples)));
        }
        let mut acc = vec![0.0; theta.len()];
        self.accumulate(theta, j, &mut acc);
        self.finish(&mut acc, 1);
        Ok(acc.into())
    }

    /// Mean gradient over `batch` sampled rows.
    pub fn minibatch_grad<R: Rng + ?Sized>(&self, theta: &[f64], batch: usize, rng: &mut R) -> Result<ParamVector> {
        self.check(theta)?;
        let mut out = vec![0.0; theta.len()];
        self.minibatch_grad_into(theta, batch, rng, &mut out)?;
        Ok(out.into())
    }

    /// Allocation-free variant for inner loops; does not re-check θ.
    pub fn minibatch_grad_into<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        batch: usize,
        rng: &mut R,
        out: &mut [f64],
    ) -> Result<()> {
        let n = self.data.n_samples;
        if batch == 0 || batch > n {
            return Err(Error::InvalidBatch { batch, samples: n });
        }
        out.fill(0.0);
        match self.sampling {
            Sampling::WithReplacement => {
                for _ in 0..batch {
                    let j = rng.random_range(0..n);
                    self.accumulate(theta, j, out);
                }
            }
            Sampling::WithoutReplacement => {
                let mut idx = index::sample(rng, n, batch).into_vec();
                idx.sort_unstable();
                for j in idx {
                    self.accumulate(theta, j, out);
                }
            }
        }
        self.finish(out, batch);
        Ok(())
    }
}

impl Objective for StyblinskiTang {
    fn dim(&self) -> usize {
        self.data.dim
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        self.check(theta)?;
        let mut total = 0.0;
        for j in 0..self.data.n_samples {
            for (&t, &x) in theta.iter().zip(self.data.row(j)) {
                total += st_f(self.sqrt_k * t - x);
            }
        }
        Ok(total / self.data.n_samples as f64)
    }

    fn grad(&self, theta: &[f64]) -> Result<ParamVector> {
        self.check(theta)?;
        let mut acc = vec![0.0; theta.len()];
        for j in 0..self.data.n_samples {
            self.accumulate(theta, j, &mut acc);
        }
        self.finish(&mut acc, self.data.n_samples);
        Ok(acc.into())
    }

    fn hessian_diag(&self, theta: &[f64]) -> Result<ParamVector> {
        self.check(theta)?;
        let mut acc = vec![0.0; theta.len()];
        for j in 0..self.data.n_samples {
            for ((a, &t), &x) in acc.iter_mut().zip(theta).zip(self.data.row(j)) {
                *a += st_d2f(self.sqrt_k * t - x);
            }
        }
        let scale = self.k / self.data.n_samples as f64;
        Ok(acc.into_iter().map(|a| a * scale).collect::<Vec<_>>().into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{fd_grad, fd_hessian_diag, generate_dataset};
    use crate::rng::stream;
    use approx::assert_relative_eq;

    fn single_zero(n: usize, k: f64) -> StyblinskiTang {
        StyblinskiTang::new(Arc::new(Dataset::from_rows(&[vec![0.0; n]]).unwrap()), k).unwrap()
    }

    #[test]
    fn loss_at_known_points() {
        let o = single_zero(10, 1.0);
        assert_eq!(o.loss(&[0.0; 10]).unwrap(), 0.0);
        let a = critical_points().a;
        let l = o.loss(&[a; 10]).unwrap();
        assert!((l - -391.662).abs() < 1e-2, "{l}");
        assert_relative_eq!(st_d2f(a), 34.583, epsilon = 1e-3);
        assert_relative_eq!(st_d2f(critical_points().b), -15.853, epsilon = 1e-3);
    }

    #[test]
    fn critical_points_are_stationary() {
        let c = critical_points();
        assert!(st_df(c.a).abs() < 1e-3);
        assert!(st_df(c.b).abs() < 1e-3);
        assert!((2.0 * c.a.powi(3) - 16.0 * c.a + 2.5).abs() < 1e-3);
    }

    #[test]
    fn analytic_matches_finite_differences() {
        let d = Arc::new(generate_dataset(200, 4, 3).unwrap());
        let o = StyblinskiTang::new(d, 1.7).unwrap();
        let th = [0.3, -1.2, 2.0, -2.5];
        let g = o.grad(&th).unwrap();
        let f = fd_grad(&o, &th, 1e-5).unwrap();
        let err: f64 = g.iter().zip(f.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err / g.norm_sq().sqrt() < 1e-6);
        let h = o.hessian_diag(&th).unwrap();
        let fh = fd_hessian_diag(&o, &th, 1e-4).unwrap();
        for (a, b) in h.iter().zip(fh.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-5);
        }
    }

    #[test]
    fn full_batch_without_replacement_is_exact() {
        let d = Arc::new(generate_dataset(50, 3, 5).unwrap());
        let o = StyblinskiTang::new(d, 2.0)
            .unwrap()
            .with_sampling(Sampling::WithoutReplacement);
        let th = [0.1, -0.4, 1.3];
        let mut r = stream(1, 2, 3);
        assert_eq!(o.minibatch_grad(&th, 50, &mut r).unwrap(), o.grad(&th).unwrap());
    }

    #[test]
    fn batch_errors_and_determinism() {
        let d = Arc::new(generate_dataset(20, 2, 5).unwrap());
        let o = StyblinskiTang::new(d, 1.0).unwrap();
        let mut r = stream(0, 0, 0);
        assert!(matches!(
            o.minibatch_grad(&[0.0, 0.0], 0, &mut r),
            Err(Error::InvalidBatch { .. })
        ));
        assert!(matches!(
            o.minibatch_grad(&[0.0, 0.0], 21, &mut r),
            Err(Error::InvalidBatch { .. })
        ));
        let a = o.minibatch_grad(&[0.5, 0.5], 5, &mut stream(4, 4, 4)).unwrap();
        let b = o.minibatch_grad(&[0.5, 0.5], 5, &mut stream(4, 4, 4)).unwrap();
        assert_eq!(a, b);
        assert!(StyblinskiTang::new(Arc::new(generate_dataset(2, 2, 0).unwrap()), 0.0).is_err());
    }
}
