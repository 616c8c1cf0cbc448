use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which update rule an [`OptimizerConfig`] drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    HeavyBall,
    Adam,
    Adai,
    AdaiW,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::HeavyBall => "heavy_ball",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Adai => "adai",
            OptimizerKind::AdaiW => "adaiw",
        }
    }

    pub fn is_adai(self) -> bool {
        matches!(self, OptimizerKind::Adai | OptimizerKind::AdaiW)
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameters shared by every optimizer in the family.
///
/// Fields that a given kind does not read are ignored; e.g. `beta0` only
/// matters for Adai/AdaiW and `beta3` only for heavy ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub eta: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub decoupled_wd: bool,
    pub bias_correction: bool,
}

impl OptimizerConfig {
    fn base(kind: OptimizerKind, eta: f64) -> Self {
        OptimizerConfig {
            kind,
            eta,
            beta0: 0.1,
            beta1: 0.0,
            beta2: 0.99,
            beta3: 1.0,
            epsilon: 1e-3,
            lambda: 0.0,
            decoupled_wd: false,
            bias_correction: true,
        }
    }

    pub fn sgd(eta: f64) -> Self {
        Self::base(OptimizerKind::Sgd, eta)
    }

    /// Heavy ball `m = β₁m + β₃g`, `θ -= ηm`. Use `beta3 = 1` for SGD-style
    /// momentum and `beta3 = 1 - beta1` for the exponential-moving-average form.
    pub fn heavy_ball(eta: f64, beta1: f64, beta3: f64) -> Self {
        OptimizerConfig {
            beta1,
            beta3,
            ..Self::base(OptimizerKind::HeavyBall, eta)
        }
    }

    pub fn adam(eta: f64) -> Self {
        OptimizerConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            ..Self::base(OptimizerKind::Adam, eta)
        }
    }

    /// Adai with β₀ = 0.1, β₂ = 0.99, ε = 0.001.
    pub fn adai(eta: f64) -> Self {
        Self::base(OptimizerKind::Adai, eta)
    }

    /// Adai with decoupled weight decay `λ`.
    pub fn adaiw(eta: f64, lambda: f64) -> Self {
        OptimizerConfig {
            lambda,
            decoupled_wd: true,
            ..Self::base(OptimizerKind::AdaiW, eta)
        }
    }

    pub fn with_weight_decay(mut self, lambda: f64, decoupled: bool) -> Self {
        self.lambda = lambda;
        self.decoupled_wd = decoupled;
        self
    }

    pub fn with_bias_correction(mut self, on: bool) -> Self {
        self.bias_correction = on;
        self
    }

    /// No bias correction; the recurrence analysed in the convergence proof.
    pub fn raw(self) -> Self {
        self.with_bias_correction(false)
    }

    /// Upper clip for Adai's per-element inertia, `1 - ε`.
    pub fn beta1_max(&self) -> f64 {
        1.0 - self.epsilon
    }

    /// Whether weight decay enters as a separate `-ληθ` term.
    pub fn uses_decoupled_decay(&self) -> bool {
        self.kind == OptimizerKind::AdaiW || self.decoupled_wd
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad(format!("beta1 must lie in [0, 1), got {}", self.beta1));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("beta2 must lie in [0, 1), got {}", self.beta2));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if self.kind == OptimizerKind::HeavyBall && !(self.beta3.is_finite() && self.beta3 > 0.0) {
            return bad(format!("beta3 must be positive, got {}", self.beta3));
        }
        if self.kind.is_adai() && !(self.beta0 > 0.0 && self.beta0 < 1.0) {
            return bad(format!("beta0 must lie in (0, 1), got {}", self.beta0));
        }
        Ok(())
    }
}
