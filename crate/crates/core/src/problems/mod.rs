//! Objectives used by the labs, plus finite-difference oracles.

mod dataset;
mod fd;
mod saddle;
mod styblinski;
mod two_basin;

pub use dataset::{generate_dataset, Dataset, DEFAULT_COORD_STD, DEFAULT_SAMPLES};
pub use fd::{fd_grad, fd_hessian_diag};
pub use saddle::QuadraticSaddle;
pub use styblinski::{critical_points, st_d2f, st_df, st_f, CriticalPoints, Sampling, StyblinskiTang};
pub use two_basin::TwoBasin;

use crate::error::Result;
use crate::optim::ParamVector;

/// Deterministic loss with analytic gradient and Hessian diagonal.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn loss(&self, theta: &[f64]) -> Result<f64>;
    fn grad(&self, theta: &[f64]) -> Result<ParamVector>;
    fn hessian_diag(&self, theta: &[f64]) -> Result<ParamVector>;
}
