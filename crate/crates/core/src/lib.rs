//! Stochastic optimizers with adaptive inertia, closed-form diffusion
//! predictions, and Monte-Carlo labs that check them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convergence_lab;
pub mod error;
pub mod escape_lab;
pub mod noise_probe;
pub mod optim;
pub mod output;
mod par;
pub mod problems;
pub mod rng;
pub mod saddle_lab;
pub mod selftest;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState, ParamVector};
