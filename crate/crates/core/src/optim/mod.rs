//! Update kernels for SGD, heavy ball, Adam, Adai and AdaiW.
//!
//! Kernels are plain functions over an [`OptimizerConfig`] and a mutable
//! [`OptimizerState`]. The `step_*` functions return the new parameters;
//! [`step_in_place`] overwrites them and is what the labs use in hot loops.

mod config;
pub mod lemma;

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

pub use config::{OptimizerConfig, OptimizerKind};
pub use lemma::{displacement_weights, lemma1_check, weight_row, Lemma1Report};

use crate::error::{check_finite, check_len, Error, Result};

/// Below this mean second moment Adai treats the gradient as zero and uses
/// the uniform inertia `1 - β₀`.
pub const ZERO_SIGNAL_FLOOR: f64 = 1e-30;

/// Flat parameter vector θ.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(n: usize) -> Self {
        ParamVector(vec![0.0; n])
    }

    pub fn filled(n: usize, value: f64) -> Self {
        ParamVector(vec![value; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

impl From<&[f64]> for ParamVector {
    fn from(v: &[f64]) -> Self {
        ParamVector(v.to_vec())
    }
}

/// Evolving optimizer buffers. Serializes with the field names below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub m: ParamVector,
    pub v: ParamVector,
    /// Running product of β₁ per element; drives first-moment bias correction.
    pub beta1_prod: Vec<f64>,
    pub beta2_pow: f64,
    pub last_beta1: ParamVector,
    pub last_update: ParamVector,
}

impl OptimizerState {
    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// Bias-corrected first moment as the kernel would use it.
    pub fn m_hat(&self, config: &OptimizerConfig) -> ParamVector {
        if !config.bias_correction {
            return self.m.clone();
        }
        self.m
            .iter()
            .zip(&self.beta1_prod)
            .map(|(m, p)| m / (1.0 - p))
            .collect::<Vec<_>>()
            .into()
    }

    /// Bias-corrected second moment as the kernel would use it.
    pub fn v_hat(&self, config: &OptimizerConfig) -> ParamVector {
        if !config.bias_correction {
            return self.v.clone();
        }
        let bc = 1.0 - self.beta2_pow;
        self.v.iter().map(|v| v / bc).collect::<Vec<_>>().into()
    }
}

/// Zeroed state for an `n`-dimensional problem.
pub fn init_state(config: &OptimizerConfig, n: usize) -> Result<OptimizerState> {
    let _ = config;
    if n == 0 {
        return Err(Error::InvalidDimension("optimizer state needs n >= 1".into()));
    }
    Ok(OptimizerState {
        step: 0,
        m: ParamVector::zeros(n),
        v: ParamVector::zeros(n),
        beta1_prod: vec![1.0; n],
        beta2_pow: 1.0,
        last_beta1: ParamVector::zeros(n),
        last_update: ParamVector::zeros(n),
    })
}

fn check_inputs(state: &OptimizerState, theta: &[f64], g: &[f64]) -> Result<()> {
    let n = state.dim();
    check_len(n, theta.len())?;
    check_len(n, g.len())?;
    check_finite("parameters", theta)?;
    check_finite("gradient", g)
}

#[inline]
fn coupled(config: &OptimizerConfig, decoupled: bool, g: f64, theta: f64) -> f64 {
    if decoupled || config.lambda == 0.0 {
        g
    } else {
        g + config.lambda * theta
    }
}

#[inline]
fn decay_term(config: &OptimizerConfig, decoupled: bool, theta: f64) -> f64 {
    if decoupled {
        -config.lambda * config.eta * theta
    } else {
        0.0
    }
}

fn sgd_kernel(config: &OptimizerConfig, state: &mut OptimizerState, theta: &mut [f64], g: &[f64]) {
    let dec = config.uses_decoupled_decay();
    for i in 0..theta.len() {
        let ge = coupled(config, dec, g[i], theta[i]);
        let d = -config.eta * ge + decay_term(config, dec, theta[i]);
        theta[i] += d;
        state.last_update[i] = d;
        state.last_beta1[i] = 0.0;
    }
    state.step += 1;
}

fn heavy_ball_kernel(config: &OptimizerConfig, state: &mut OptimizerState, theta: &mut [f64], g: &[f64]) {
    let dec = config.uses_decoupled_decay();
    let (b1, b3) = (config.beta1, config.beta3);
    for i in 0..theta.len() {
        let ge = coupled(config, dec, g[i], theta[i]);
        let m = b1 * state.m[i] + b3 * ge;
        state.m[i] = m;
        state.beta1_prod[i] *= b1;
        let d = -config.eta * m + decay_term(config, dec, theta[i]);
        theta[i] += d;
        state.last_update[i] = d;
        state.last_beta1[i] = b1;
    }
    state.step += 1;
}

fn adam_kernel(config: &OptimizerConfig, state: &mut OptimizerState, theta: &mut [f64], g: &[f64]) {
    let dec = config.uses_decoupled_decay();
    let (b1, b2) = (config.beta1, config.beta2);
    state.beta2_pow *= b2;
    let bc2 = if config.bias_correction {
        1.0 - state.beta2_pow
    } else {
        1.0
    };
    for i in 0..theta.len() {
        let ge = coupled(config, dec, g[i], theta[i]);
        let m = b1 * state.m[i] + (1.0 - b1) * ge;
        let v = b2 * state.v[i] + (1.0 - b2) * ge * ge;
        state.m[i] = m;
        state.v[i] = v;
        state.beta1_prod[i] *= b1;
        let m_hat = if config.bias_correction {
            m / (1.0 - state.beta1_prod[i])
        } else {
            m
        };
        let v_hat = v / bc2;
        let d = -config.eta * m_hat / (v_hat.sqrt() + config.epsilon) + decay_term(config, dec, theta[i]);
        theta[i] += d;
        state.last_update[i] = d;
        state.last_beta1[i] = b1;
    }
    state.step += 1;
}

fn adai_kernel(config: &OptimizerConfig, state: &mut OptimizerState, theta: &mut [f64], g: &[f64], decoupled: bool) {
    let n = theta.len();
    let b2 = config.beta2;
    state.beta2_pow *= b2;
    let bc2 = if config.bias_correction {
        1.0 - state.beta2_pow
    } else {
        1.0
    };

    let mut v_sum = 0.0;
    for i in 0..n {
        let ge = coupled(config, decoupled, g[i], theta[i]);
        let v = b2 * state.v[i] + (1.0 - b2) * ge * ge;
        state.v[i] = v;
        v_sum += v / bc2;
    }
    let v_bar = v_sum / n as f64;
    let b1_max = config.beta1_max();

    for i in 0..n {
        let ge = coupled(config, decoupled, g[i], theta[i]);
        let b1 = if v_bar < ZERO_SIGNAL_FLOOR {
            1.0 - config.beta0
        } else {
            1.0 - config.beta0 / v_bar * (state.v[i] / bc2)
        }
        .clamp(0.0, b1_max);
        let m = b1 * state.m[i] + (1.0 - b1) * ge;
        state.m[i] = m;
        state.beta1_prod[i] *= b1;
        let m_hat = if config.bias_correction {
            m / (1.0 - state.beta1_prod[i])
        } else {
            m
        };
        let d = -config.eta * m_hat + decay_term(config, decoupled, theta[i]);
        theta[i] += d;
        state.last_update[i] = d;
        state.last_beta1[i] = b1;
    }
    state.step += 1;
}

/// One step of whichever rule `config.kind` selects, overwriting `theta`.
pub fn step_in_place(config: &OptimizerConfig, state: &mut OptimizerState, theta: &mut [f64], g: &[f64]) -> Result<()> {
    check_inputs(state, theta, g)?;
    match config.kind {
        OptimizerKind::Sgd => sgd_kernel(config, state, theta, g),
        OptimizerKind::HeavyBall => heavy_ball_kernel(config, state, theta, g),
        OptimizerKind::Adam => adam_kernel(config, state, theta, g),
        OptimizerKind::Adai => adai_kernel(config, state, theta, g, config.decoupled_wd),
        OptimizerKind::AdaiW => adai_kernel(config, state, theta, g, true),
    }
    Ok(())
}

fn checked_copy(state: &OptimizerState, theta: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    check_inputs(state, theta, g)?;
    Ok(theta.to_vec())
}

/// `θ' = θ - η(g + λθ)`, or with `-ληθ` appended when decay is decoupled.
pub fn step_sgd(config: &OptimizerConfig, state: &mut OptimizerState, theta: &[f64], g: &[f64]) -> Result<ParamVector> {
    let mut t = checked_copy(state, theta, g)?;
    sgd_kernel(config, state, &mut t, g);
    Ok(ParamVector(t))
}

/// `m = β₁m + β₃g`, `θ' = θ - ηm`.
pub fn step_heavy_ball(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    theta: &[f64],
    g: &[f64],
) -> Result<ParamVector> {
    let mut t = checked_copy(state, theta, g)?;
    heavy_ball_kernel(config, state, &mut t, g);
    Ok(ParamVector(t))
}

/// Adam with `√v̂ + ε` in the denominator.
pub fn step_adam(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    theta: &[f64],
    g: &[f64],
) -> Result<ParamVector> {
    let mut t = checked_copy(state, theta, g)?;
    adam_kernel(config, state, &mut t, g);
    Ok(ParamVector(t))
}

/// Adai: per-element inertia `β₁ = clamp(1 - β₀v̂/v̄, 0, 1-ε)`.
///
/// Weight decay is coupled unless `config.decoupled_wd` is set.
pub fn step_adai(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    theta: &[f64],
    g: &[f64],
) -> Result<ParamVector> {
    let dec = config.decoupled_wd;
    let mut t = checked_copy(state, theta, g)?;
    adai_kernel(config, state, &mut t, g, dec);
    Ok(ParamVector(t))
}

/// Adai with the decoupled `-ληθ` term regardless of `config.decoupled_wd`.
pub fn step_adaiw(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    theta: &[f64],
    g: &[f64],
) -> Result<ParamVector> {
    let mut t = checked_copy(state, theta, g)?;
    adai_kernel(config, state, &mut t, g, true);
    Ok(ParamVector(t))
}

/// Per-step record kept when tracing is on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub beta1_vec: ParamVector,
    /// Gradient as fed to the moment update (includes coupled decay).
    pub grad: ParamVector,
}

/// Trajectory retained by a tracing [`Optimizer`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// `thetas[t]` is θ before step `t`; one longer than `records`.
    pub thetas: Vec<ParamVector>,
    pub records: Vec<StepRecord>,
}

/// Config, state and optional trace bundled together.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub state: OptimizerState,
    pub trace: Option<Trace>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, n: usize) -> Result<Self> {
        config.validate()?;
        Ok(Optimizer {
            state: init_state(&config, n)?,
            config,
            trace: None,
        })
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Trace::default());
        self
    }

    pub fn step(&mut self, theta: &mut [f64], g: &[f64]) -> Result<()> {
        let before = self.trace.as_ref().map(|_| theta.to_vec());
        step_in_place(&self.config, &mut self.state, theta, g)?;
        if let (Some(trace), Some(before)) = (self.trace.as_mut(), before) {
            let dec = self.config.uses_decoupled_decay();
            let grad: Vec<f64> = g
                .iter()
                .zip(&before)
                .map(|(&gi, &ti)| coupled(&self.config, dec, gi, ti))
                .collect();
            if trace.thetas.is_empty() {
                trace.thetas.push(before.into());
            }
            trace.thetas.push(theta.to_vec().into());
            trace.records.push(StepRecord {
                beta1_vec: self.state.last_beta1.clone(),
                grad: grad.into(),
            });
        }
        Ok(())
    }
}
