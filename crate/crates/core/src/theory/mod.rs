//! Closed-form predictions of the diffusion picture.
//!
//! Time `t` is dynamical time `ηT` for SGD and momentum; Adam's iteration
//! form takes the iteration count directly.

mod escape;

pub use escape::{effective_diffusion_ratio, tau_adai, tau_adam, tau_momentum, EscapeGeometry, EscapeTime};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{OptimizerConfig, OptimizerKind};

/// Mass and damping of the continuous heavy-ball dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub eta: f64,
    pub beta1: f64,
    pub beta3: f64,
    /// `M = η/β₃`.
    pub mass: f64,
    /// `γ = (1-β₁)/η`.
    pub damping: f64,
    /// `γM`, the factor relating `D` to the inverse temperature.
    pub inverse_temperature_scale: f64,
}

impl DynamicsParams {
    pub fn new(eta: f64, beta1: f64, beta3: f64) -> Result<Self> {
        if beta3 == 0.0 {
            return Err(Error::Division("beta3 = 0".into()));
        }
        if eta == 0.0 {
            return Err(Error::Division("eta = 0".into()));
        }
        let mass = eta / beta3;
        let damping = (1.0 - beta1) / eta;
        Ok(DynamicsParams {
            eta,
            beta1,
            beta3,
            mass,
            damping,
            inverse_temperature_scale: damping * mass,
        })
    }

    pub fn gamma_m(&self) -> f64 {
        self.damping * self.mass
    }
}

/// `M, γ` for SGD (`β₁ = 0, β₃ = 1`) or heavy ball.
pub fn mass_damping(config: &OptimizerConfig) -> Result<DynamicsParams> {
    match config.kind {
        OptimizerKind::Sgd => DynamicsParams::new(config.eta, 0.0, 1.0),
        OptimizerKind::HeavyBall => DynamicsParams::new(config.eta, config.beta1, config.beta3),
        k => Err(Error::Mode(format!(
            "no scalar mass for {k}; use mass_damping_adai for Adai"
        ))),
    }
}

/// Per-element `M_i = η/(1-β₁,i)`, `γ_i = (1-β₁,i)/η`.
pub fn mass_damping_adai(config: &OptimizerConfig, beta1: &[f64]) -> Result<Vec<DynamicsParams>> {
    if !config.kind.is_adai() {
        return Err(Error::Mode(format!("expected Adai, got {}", config.kind)));
    }
    beta1
        .iter()
        .map(|&b| DynamicsParams::new(config.eta, b, 1.0 - b))
        .collect()
}

/// Hessian eigenvalues and the diffusion eigenvalues `D_i = η|H_i|/(2B)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddleSpectrum {
    pub h: Vec<f64>,
    pub d: Vec<f64>,
    pub eta: f64,
    pub batch: usize,
}

impl SaddleSpectrum {
    pub fn new(h: Vec<f64>, eta: f64, batch: usize) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::InvalidDimension("empty spectrum".into()));
        }
        if batch == 0 {
            return Err(Error::InvalidBatch { batch, samples: 0 });
        }
        let d = h.iter().map(|x| eta * x.abs() / (2.0 * batch as f64)).collect();
        Ok(SaddleSpectrum { h, d, eta, batch })
    }
}

/// Predicted per-direction drift², diffusion variance and their sum at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsdPrediction {
    pub t: f64,
    pub drift_sq: Vec<f64>,
    pub diffusion: Vec<f64>,
    pub total: Vec<f64>,
}

impl MsdPrediction {
    fn from_parts(t: f64, drift_sq: Vec<f64>, diffusion: Vec<f64>) -> Self {
        let total = drift_sq.iter().zip(&diffusion).map(|(a, b)| a + b).collect();
        MsdPrediction {
            t,
            drift_sq,
            diffusion,
            total,
        }
    }

    pub fn total_sum(&self) -> f64 {
        self.total.iter().sum()
    }
}

/// `(D/(cH))(1 - e^{-2Ht/c})`, with the `H → 0` limit `2Dt/c²`.
fn relaxed_variance(d: f64, h: f64, t: f64, c: f64) -> f64 {
    if h == 0.0 {
        2.0 * d * t / (c * c)
    } else {
        -d / (c * h) * (-2.0 * h * t / c).exp_m1()
    }
}

/// `σ_i²(t) = (D_i/H_i)(1 - e^{-2H_i t})`.
pub fn msd_sgd(spec: &SaddleSpectrum, t: f64) -> MsdPrediction {
    let diffusion = spec
        .h
        .iter()
        .zip(&spec.d)
        .map(|(&h, &d)| relaxed_variance(d, h, t, 1.0))
        .collect();
    MsdPrediction::from_parts(t, vec![0.0; spec.h.len()], diffusion)
}

/// Momentum drift `D/(γ³M²)[1-e^{-γt}]²` plus diffusion `D/(γMH)[1-e^{-2Ht/(γM)}]`.
pub fn msd_momentum(spec: &SaddleSpectrum, dynamics: &DynamicsParams, t: f64) -> MsdPrediction {
    let (g, m) = (dynamics.damping, dynamics.mass);
    let relax = (-(-g * t).exp_m1()).powi(2);
    let drift = spec.d.iter().map(|d| d / (g * g * g * m * m) * relax).collect();
    let diffusion = spec
        .h
        .iter()
        .zip(&spec.d)
        .map(|(&h, &d)| relaxed_variance(d, h, t, g * m))
        .collect();
    MsdPrediction::from_parts(t, drift, diffusion)
}

/// Adam in adaptive time `t̂`: drift `D/(γ²M)[1-e^{-γt̂}]²` (as printed, one
/// power of γM fewer than the momentum drift) plus the momentum diffusion term.
pub fn msd_adam(spec: &SaddleSpectrum, dynamics: &DynamicsParams, t_hat: f64) -> MsdPrediction {
    let (g, m) = (dynamics.damping, dynamics.mass);
    let relax = (-(-g * t_hat).exp_m1()).powi(2);
    let drift = spec.d.iter().map(|d| d / (g * g * m) * relax).collect();
    let diffusion = spec
        .h
        .iter()
        .zip(&spec.d)
        .map(|(&h, &d)| relaxed_variance(d, h, t_hat, g * m))
        .collect();
    MsdPrediction::from_parts(t_hat, drift, diffusion)
}

/// Adam's leading iteration-count form, returned as `(drift², diffusion)`:
/// `η²/(2(1-β₁))[1-e^{-(1-β₁)T}]²` and `η²T`. Independent of `H`.
pub fn msd_adam_iterations(eta: f64, beta1: f64, iters: f64) -> (f64, f64) {
    let relax = (-(-(1.0 - beta1) * iters).exp_m1()).powi(2);
    (eta * eta / (2.0 * (1.0 - beta1)) * relax, eta * eta * iters)
}

/// Squared total Adai drift `Σ|H_i| η² / (β₀ n B)`.
pub fn drift_adai(h: &[f64], eta: f64, beta0: f64, batch: usize) -> f64 {
    let trace: f64 = h.iter().map(|x| x.abs()).sum();
    trace * eta * eta / (beta0 * h.len() as f64 * batch as f64)
}

/// Stationary velocity variance `D/(γM²)` of heavy ball in a basin.
pub fn equilibrium_velocity_variance(d: f64, dynamics: &DynamicsParams) -> f64 {
    d / (dynamics.damping * dynamics.mass * dynamics.mass)
}

/// Inputs to the Adai convergence bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceBoundInputs {
    pub smoothness: f64,
    pub l0: f64,
    pub l_star: f64,
    pub grad_bound: f64,
    pub delta_sq: f64,
    pub c: f64,
    pub beta1_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceBound {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub bound: f64,
}

/// `(C₁ + C₂ + C₃)/√(t+1)` bounding `min_k E‖∇L(θ_k)‖²`.
pub fn convergence_bound(inputs: &ConvergenceBoundInputs, t: u64) -> Result<ConvergenceBound> {
    let one_minus = 1.0 - inputs.beta1_max;
    if one_minus <= 0.0 {
        return Err(Error::Division(format!("beta1_max = {}", inputs.beta1_max)));
    }
    if inputs.c == 0.0 {
        return Err(Error::Division("C = 0".into()));
    }
    let g2 = inputs.grad_bound * inputs.grad_bound;
    let c1 = (inputs.l0 - inputs.l_star) / (one_minus * inputs.c);
    let c2 = inputs.beta1_max * inputs.c / (2.0 * one_minus * one_minus) * g2;
    let c3 = inputs.smoothness * inputs.c / (2.0 * one_minus * one_minus) * (g2 + inputs.delta_sq);
    let bound = (c1 + c2 + c3) / ((t + 1) as f64).sqrt();
    Ok(ConvergenceBound { c1, c2, c3, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sgd_msd_examples() {
        let s = SaddleSpectrum::new(vec![0.001], 0.1, 10).unwrap();
        let p = msd_sgd(&s, 10.0);
        assert_relative_eq!(p.total[0], 9.9007e-5, max_relative = 1e-4);
        assert_relative_eq!(0.001 * 0.01 * 100.0 / 10.0, 1.0e-4);
        assert_relative_eq!(msd_sgd(&s, 1e6).total[0], 0.1 / 20.0, max_relative = 1e-12);
        assert_eq!(msd_sgd(&s, 0.0).total[0], 0.0);
        let z = SaddleSpectrum::new(vec![0.0, 1e-300], 0.1, 10).unwrap();
        assert_eq!(msd_sgd(&z, 3.0).total[0], 0.0);
    }

    #[test]
    fn momentum_msd_example() {
        let s = SaddleSpectrum::new(vec![0.001], 0.1, 10).unwrap();
        let dy = DynamicsParams::new(0.1, 0.9, 0.1).unwrap();
        let p = msd_momentum(&s, &dy, 10.0);
        assert_relative_eq!(p.drift_sq[0], 5.0e-6, max_relative = 1e-3);
        assert_relative_eq!(p.diffusion[0], 9.9e-5, max_relative = 1e-3);
        assert_relative_eq!(p.total[0], 1.04e-4, max_relative = 2e-3);
        let far = msd_momentum(&s, &dy, 1e7);
        assert_relative_eq!(far.drift_sq[0], s.d[0], max_relative = 1e-12);
        assert_relative_eq!(far.diffusion[0], s.d[0] / 0.001, max_relative = 1e-12);
    }

    #[test]
    fn momentum_reduces_to_sgd() {
        let s = SaddleSpectrum::new(vec![0.3, -0.02, 0.0, 2.0], 0.05, 7).unwrap();
        let dy = DynamicsParams::new(0.05, 0.5, 0.5).unwrap();
        assert_relative_eq!(dy.gamma_m(), 1.0);
        for t in [0.0, 0.5, 3.0, 40.0] {
            let a = msd_momentum(&s, &dy, t);
            let b = msd_sgd(&s, t);
            for (x, y) in a.diffusion.iter().zip(&b.diffusion) {
                assert_relative_eq!(x, y, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn adam_iteration_form() {
        let (drift, _) = msd_adam_iterations(0.03, 0.9, 100.0);
        assert_relative_eq!(drift, 4.4996e-3, max_relative = 1e-4);
        assert_eq!(msd_adam_iterations(0.03, 0.9, 0.0), (0.0, 0.0));
    }

    #[test]
    fn adai_drift_examples() {
        let h = [0.5, -1.5, 1.0, -1.0];
        assert_relative_eq!(drift_adai(&h, 0.001, 0.1, 10), 1e-6, max_relative = 1e-12);
        assert_relative_eq!(drift_adai(&h, 0.001, 0.2, 10), 0.5e-6, max_relative = 1e-12);
        assert_eq!(drift_adai(&h, 0.0, 0.1, 10), 0.0);
    }

    #[test]
    fn bound_constants() {
        let inp = ConvergenceBoundInputs {
            smoothness: 1.0,
            l0: 1.0,
            l_star: 0.0,
            grad_bound: 1.0,
            delta_sq: 1.0,
            c: 1.0,
            beta1_max: 0.999,
        };
        let b = convergence_bound(&inp, 0).unwrap();
        assert_relative_eq!(b.c1, 1000.0, max_relative = 1e-9);
        assert_relative_eq!(b.c2, 499_500.0, max_relative = 1e-9);
        assert_relative_eq!(b.c3, 1e6, max_relative = 1e-9);
        let bad = ConvergenceBoundInputs { beta1_max: 1.0, ..inp };
        assert!(matches!(convergence_bound(&bad, 3), Err(Error::Division(_))));
    }

    #[test]
    fn mass_damping_examples() {
        let a = mass_damping(&OptimizerConfig::heavy_ball(0.1, 0.9, 0.1)).unwrap();
        assert_relative_eq!(a.mass, 1.0, max_relative = 1e-12);
        assert_relative_eq!(a.damping, 1.0, max_relative = 1e-12);
        let b = mass_damping(&OptimizerConfig::heavy_ball(0.1, 0.9, 1.0)).unwrap();
        assert_relative_eq!(b.mass, 0.1, max_relative = 1e-12);
        assert_relative_eq!(b.gamma_m(), 0.1, max_relative = 1e-12);
        for p in mass_damping_adai(&OptimizerConfig::adai(0.3), &[0.0, 0.5, 0.999]).unwrap() {
            assert_relative_eq!(p.gamma_m(), 1.0, max_relative = 1e-12);
        }
        assert!(mass_damping(&OptimizerConfig::adam(0.1)).is_err());
        let mut hb = OptimizerConfig::heavy_ball(0.1, 0.9, 1.0);
        hb.beta3 = 0.0;
        assert!(matches!(mass_damping(&hb), Err(Error::Division(_))));
    }
}
