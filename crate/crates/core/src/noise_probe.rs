//! Empirical checks of the minibatch gradient-noise model: covariance
//! against the per-sample second moment, 1/B scaling, proportionality to
//! the Hessian and Gaussianity of the noise.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_finite, check_len, Error, Result};
use crate::optim::ParamVector;
use crate::problems::{Objective, QuadraticSaddle, StyblinskiTang};
use crate::rng::labeled_stream;
use crate::stats::{excess_kurtosis, fisher_ci, median, pearson, spearman};

pub const MIN_DRAWS: usize = 1000;
/// Above this dimension only the covariance diagonal is kept.
pub const FULL_MATRIX_MAX_DIM: usize = 50;
const SHARD: usize = 1024;

/// Objectives that can produce a stochastic gradient at fixed θ.
pub trait NoisyGradient: Objective {
    fn noisy_grad_into(&self, theta: &[f64], batch: usize, rng: &mut dyn rand::RngCore, out: &mut [f64]) -> Result<()>;

    /// `(1/N) Σ_j ∇L_j ∇L_jᵀ` when the objective is a finite sum.
    fn per_sample_second_moment(&self, _theta: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

impl NoisyGradient for StyblinskiTang {
    fn noisy_grad_into(&self, theta: &[f64], batch: usize, rng: &mut dyn rand::RngCore, out: &mut [f64]) -> Result<()> {
        self.minibatch_grad_into(theta, batch, rng, out)
    }

    fn per_sample_second_moment(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let n = self.dim();
        let samples = self.dataset().n_samples;
        let mut s = DMatrix::zeros(n, n);
        for j in 0..samples {
            let g = self.sample_grad(theta, j).ok()?;
            let g = nalgebra::DVector::from_column_slice(&g);
            s.ger(1.0, &g, &g, 1.0);
        }
        Some(s / samples as f64)
    }
}

/// Uses the saddle's own batch size; the `batch` argument is ignored.
impl NoisyGradient for QuadraticSaddle {
    fn noisy_grad_into(
        &self,
        theta: &[f64],
        _batch: usize,
        rng: &mut dyn rand::RngCore,
        out: &mut [f64],
    ) -> Result<()> {
        self.stochastic_grad_into(theta, rng, out);
        Ok(())
    }
}

/// Quadratic with noise of equal variance in every direction.
#[derive(Clone, Debug, PartialEq)]
pub struct IsotropicControl {
    pub hessian: Vec<f64>,
    pub std: f64,
}

impl Objective for IsotropicControl {
    fn dim(&self) -> usize {
        self.hessian.len()
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        check_len(self.dim(), theta.len())?;
        Ok(0.5 * self.hessian.iter().zip(theta).map(|(h, t)| h * t * t).sum::<f64>())
    }

    fn grad(&self, theta: &[f64]) -> Result<ParamVector> {
        check_len(self.dim(), theta.len())?;
        Ok(self
            .hessian
            .iter()
            .zip(theta)
            .map(|(h, t)| h * t)
            .collect::<Vec<_>>()
            .into())
    }

    fn hessian_diag(&self, theta: &[f64]) -> Result<ParamVector> {
        check_len(self.dim(), theta.len())?;
        Ok(self.hessian.clone().into())
    }
}

impl NoisyGradient for IsotropicControl {
    fn noisy_grad_into(&self, theta: &[f64], batch: usize, rng: &mut dyn rand::RngCore, out: &mut [f64]) -> Result<()> {
        let s = self.std / (batch.max(1) as f64).sqrt();
        for i in 0..out.len() {
            out[i] = self.hessian[i] * theta[i] + s * rng.sample::<f64, _>(StandardNormal);
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct NoiseEstimate {
    /// Full covariance of the minibatch gradients, when `n ≤ 50`.
    pub c_hat: Option<DMatrix<f64>>,
    pub c_diag: Vec<f64>,
    pub s_hat: Option<DMatrix<f64>>,
    pub g_bar: ParamVector,
    pub h_diag: ParamVector,
    pub batch: usize,
    pub draws: usize,
}

impl NoiseEstimate {
    pub fn trace(&self) -> f64 {
        self.c_diag.iter().sum()
    }

    /// `(S_hat - ḡḡᵀ)/B`, the exact expectation of `C_hat` for
    /// with-replacement minibatches.
    pub fn predicted_covariance(&self) -> Option<DMatrix<f64>> {
        let s = self.s_hat.as_ref()?;
        let g = nalgebra::DVector::from_column_slice(&self.g_bar);
        Some((s - &g * g.transpose()) / self.batch as f64)
    }

    /// `‖C_hat - (S_hat - ḡḡᵀ)/B‖_F / ‖(S_hat - ḡḡᵀ)/B‖_F`.
    pub fn sampling_identity_error(&self) -> Result<f64> {
        let (Some(c), Some(p)) = (self.c_hat.as_ref(), self.predicted_covariance()) else {
            return Err(Error::Estimation(
                "needs the full covariance and the per-sample second moment".into(),
            ));
        };
        let denom = p.norm();
        if denom == 0.0 {
            return Err(Error::Division("predicted covariance is zero".into()));
        }
        Ok((c - &p).norm() / denom)
    }

    pub fn summary(&self) -> NoiseSummary {
        NoiseSummary {
            batch: self.batch,
            draws: self.draws,
            trace: self.trace(),
            c_diag: self.c_diag.clone(),
            h_diag: self.h_diag.0.clone(),
            g_bar: self.g_bar.0.clone(),
            identity_error: self.sampling_identity_error().ok(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NoiseSummary {
    pub batch: usize,
    pub draws: usize,
    pub trace: f64,
    pub c_diag: Vec<f64>,
    pub h_diag: Vec<f64>,
    pub g_bar: Vec<f64>,
    pub identity_error: Option<f64>,
}

struct Partial {
    count: usize,
    sum: Vec<f64>,
    /// Row-major `n × n`, or just the diagonal.
    outer: Vec<f64>,
}

impl Partial {
    fn merge(mut self, other: Partial) -> Partial {
        self.count += other.count;
        self.sum.iter_mut().zip(&other.sum).for_each(|(a, b)| *a += b);
        self.outer.iter_mut().zip(&other.outer).for_each(|(a, b)| *a += b);
        self
    }
}

fn pairwise(mut parts: Vec<Partial>) -> Partial {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().expect("at least one shard")
}

/// Covariance of `draws` minibatch gradients at fixed θ.
///
/// Draws are split into shards of 1024 with their own streams and merged
/// pairwise in shard order, so the result does not depend on the pool size.
pub fn estimate_sgn_covariance<O: NoisyGradient + Sync>(
    obj: &O,
    theta: &[f64],
    batch: usize,
    draws: usize,
    seed: u64,
) -> Result<NoiseEstimate> {
    if draws < MIN_DRAWS {
        return Err(Error::InsufficientData(format!(
            "{draws} draws, need at least {MIN_DRAWS}"
        )));
    }
    let n = obj.dim();
    check_len(n, theta.len())?;
    check_finite("parameters", theta)?;
    let g_bar = obj.grad(theta)?;
    let full = n <= FULL_MATRIX_MAX_DIM;
    let shards = draws.div_ceil(SHARD);
    let parts: Vec<Result<Partial>> = (0..shards)
        .into_par_iter()
        .with_max_len(1)
        .map(|s| {
            let count = SHARD.min(draws - s * SHARD);
            let mut rng = labeled_stream(seed, "noise", s as u64);
            let mut g = vec![0.0; n];
            let mut p = Partial {
                count,
                sum: vec![0.0; n],
                outer: vec![0.0; if full { n * n } else { n }],
            };
            for _ in 0..count {
                obj.noisy_grad_into(theta, batch, &mut rng, &mut g)?;
                for ((x, s), b) in g.iter_mut().zip(p.sum.iter_mut()).zip(g_bar.iter()) {
                    *x -= b;
                    *s += *x;
                }
                if full {
                    for (row, gi) in p.outer.chunks_exact_mut(n).zip(&g) {
                        for (o, gj) in row.iter_mut().zip(&g) {
                            *o += gi * gj;
                        }
                    }
                } else {
                    for (o, gi) in p.outer.iter_mut().zip(&g) {
                        *o += gi * gi;
                    }
                }
            }
            Ok(p)
        })
        .collect();
    let tot = pairwise(parts.into_iter().collect::<Result<Vec<_>>>()?);
    let m = tot.count as f64;
    let mean: Vec<f64> = tot.sum.iter().map(|s| s / m).collect();
    let (c_hat, c_diag) = if full {
        let c = DMatrix::from_fn(n, n, |i, j| (tot.outer[i * n + j] - m * mean[i] * mean[j]) / (m - 1.0));
        let d = (0..n).map(|i| c[(i, i)]).collect();
        (Some(c), d)
    } else {
        (
            None,
            (0..n)
                .map(|i| (tot.outer[i] - m * mean[i] * mean[i]) / (m - 1.0))
                .collect(),
        )
    };
    Ok(NoiseEstimate {
        c_hat,
        c_diag,
        s_hat: if full {
            obj.per_sample_second_moment(theta)
        } else {
            None
        },
        g_bar,
        h_diag: obj.hessian_diag(theta)?,
        batch,
        draws,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationReport {
    pub n: usize,
    pub pearson: f64,
    pub spearman: f64,
    /// 95% Fisher interval for the rank correlation.
    pub spearman_ci: (f64, f64),
}

/// Correlation between `B·diag(C_hat)` and `|diag(H)|`.
pub fn hessian_proportionality(est: &NoiseEstimate) -> Result<CorrelationReport> {
    let noise: Vec<f64> = est.c_diag.iter().map(|c| c * est.batch as f64).collect();
    let h = abs_eigen_diag(&est.h_diag);
    let r = spearman(&noise, &h)?;
    Ok(CorrelationReport {
        n: noise.len(),
        pearson: pearson(&noise, &h)?,
        spearman: r,
        spearman_ci: fisher_ci(r, noise.len()),
    })
}

#[derive(Serialize)]
struct ScatterRow {
    abs_h: f64,
    b_c_ii: f64,
}

/// `(|H_i|, B·C_ii)` pairs.
pub fn write_scatter_csv(path: &Path, est: &NoiseEstimate) -> Result<()> {
    let rows: Vec<ScatterRow> = est
        .h_diag
        .iter()
        .zip(&est.c_diag)
        .map(|(h, c)| ScatterRow {
            abs_h: h.abs(),
            b_c_ii: c * est.batch as f64,
        })
        .collect();
    crate::output::write_csv(path, &rows)
}

pub const KURTOSIS_THRESHOLD: f64 = 0.5;
/// Smallest batch for which the Gaussian picture is gated.
pub const GAUSSIAN_MIN_BATCH: usize = 16;

#[derive(Clone, Debug, Serialize)]
pub struct GaussianityReport {
    pub batch: usize,
    pub draws: usize,
    pub excess_kurtosis: Vec<f64>,
    pub median_abs_kurtosis: f64,
    /// `None` below the gated batch size.
    pub passed: Option<bool>,
}

/// Excess kurtosis of each coordinate of `draws` minibatch noise samples.
pub fn gaussianity_check<O: NoisyGradient + Sync>(
    obj: &O,
    theta: &[f64],
    batch: usize,
    draws: usize,
    seed: u64,
) -> Result<GaussianityReport> {
    if draws < MIN_DRAWS {
        return Err(Error::InsufficientData(format!(
            "{draws} draws, need at least {MIN_DRAWS}"
        )));
    }
    let n = obj.dim();
    check_len(n, theta.len())?;
    let shards = draws.div_ceil(SHARD);
    let parts: Vec<Result<Vec<Vec<f64>>>> = (0..shards)
        .into_par_iter()
        .with_max_len(1)
        .map(|s| {
            let count = SHARD.min(draws - s * SHARD);
            let mut rng = labeled_stream(seed, "gauss", s as u64);
            let mut g = vec![0.0; n];
            let mut cols = vec![Vec::with_capacity(count); n];
            for _ in 0..count {
                obj.noisy_grad_into(theta, batch, &mut rng, &mut g)?;
                for (c, x) in cols.iter_mut().zip(&g) {
                    c.push(*x);
                }
            }
            Ok(cols)
        })
        .collect();
    let mut cols = vec![Vec::with_capacity(draws); n];
    for p in parts {
        for (c, part) in cols.iter_mut().zip(p?) {
            c.extend(part);
        }
    }
    gaussianity_of(&cols, batch)
}

/// Same report from pre-drawn samples, one vector per coordinate.
pub fn gaussianity_of(columns: &[Vec<f64>], batch: usize) -> Result<GaussianityReport> {
    let draws = columns.first().map_or(0, Vec::len);
    if draws < MIN_DRAWS {
        return Err(Error::InsufficientData(format!(
            "{draws} draws, need at least {MIN_DRAWS}"
        )));
    }
    let k: Vec<f64> = columns.iter().map(|c| excess_kurtosis(c)).collect();
    let med = median(&k.iter().map(|x| x.abs()).collect::<Vec<_>>());
    Ok(GaussianityReport {
        batch,
        draws,
        excess_kurtosis: k,
        median_abs_kurtosis: med,
        passed: (batch >= GAUSSIAN_MIN_BATCH).then_some(med < KURTOSIS_THRESHOLD),
    })
}

/// `[H]⁺` for a diagonal matrix.
pub fn abs_eigen_diag(h: &[f64]) -> ParamVector {
    h.iter().map(|x| x.abs()).collect::<Vec<_>>().into()
}

/// `[M]⁺ = U |Λ| Uᵀ` for a symmetric matrix.
pub fn abs_eigen_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    let abs = DMatrix::from_diagonal(&e.eigenvalues.map(f64::abs));
    &e.eigenvectors * abs * e.eigenvectors.transpose()
}

/// Point near the shifted minimum with per-coordinate offsets in
/// `[-spread, spread]`, so the Hessian diagonal is not flat.
pub fn near_minimum_point(obj: &StyblinskiTang, spread: f64) -> ParamVector {
    let n = obj.dim();
    let a = crate::problems::critical_points().a;
    let sk = obj.k().sqrt();
    (0..n)
        .map(|i| {
            let off = if n == 1 {
                0.0
            } else {
                -spread + 2.0 * spread * i as f64 / (n - 1) as f64
            };
            (a + off) / sk
        })
        .collect::<Vec<_>>()
        .into()
}

#[derive(Clone, Debug, Serialize)]
pub struct NoiseProbeReport {
    pub estimate: NoiseSummary,
    pub doubled_batch_trace: f64,
    pub trace_ratio: f64,
    pub correlation: Option<CorrelationReport>,
    pub gaussianity: GaussianityReport,
}
