use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Barrier data for one valley/saddle pair along the escape direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeGeometry {
    pub delta_l: f64,
    pub h_ae: f64,
    pub h_be: f64,
    /// Path parameter in (0, 1); 0.5 is an arbitrary default.
    pub s: f64,
    pub n: usize,
    pub trace_abs_hb: f64,
    /// `|det(H_a⁻¹ H_b)|`, needed only by the Adam prefactor.
    pub det_ratio_ab: f64,
    pub eta: f64,
    pub batch: f64,
    pub beta1: f64,
    pub beta3: f64,
    pub beta0: f64,
}

impl EscapeGeometry {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGeometry(m));
        if !(self.delta_l > 0.0) {
            return bad(format!("delta_l must be positive, got {}", self.delta_l));
        }
        if !(self.h_ae > 0.0) {
            return bad(format!("h_ae must be positive, got {}", self.h_ae));
        }
        if !(self.h_be < 0.0) {
            return bad(format!("h_be must be negative, got {}", self.h_be));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return bad(format!("s must lie in (0, 1), got {}", self.s));
        }
        if !(self.eta > 0.0 && self.batch > 0.0) {
            return bad("eta and batch must be positive".into());
        }
        Ok(())
    }

    fn path_sum(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.s / f(self.h_ae) + (1.0 - self.s) / f(self.h_be.abs())
    }
}

/// `τ = prefactor · exp(exponent)` together with the leading log order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeTime {
    pub prefactor: f64,
    pub exponent: f64,
    pub log_tau: f64,
    pub log_order: f64,
}

impl EscapeTime {
    fn new(prefactor: f64, exponent: f64, log_order: f64) -> Self {
        EscapeTime {
            prefactor,
            exponent,
            log_tau: prefactor.ln() + exponent,
            log_order,
        }
    }

    /// May overflow to infinity for large exponents; prefer `log_tau`.
    pub fn tau(&self) -> f64 {
        self.prefactor * self.exponent.exp()
    }
}

/// Heavy-ball escape time with `γM = (1-β₁)/β₃`.
pub fn tau_momentum(g: &EscapeGeometry) -> Result<EscapeTime> {
    g.validate()?;
    let gamma = (1.0 - g.beta1) / g.eta;
    let mass = g.eta / g.beta3;
    let hb = g.h_be.abs();
    let prefactor = PI * ((1.0 + 4.0 * hb / (gamma * gamma * mass)).sqrt() + 1.0) / hb;
    let exponent = 2.0 * gamma * mass * g.batch * g.delta_l / g.eta * g.path_sum(|h| h);
    let order = 2.0 * (1.0 - g.beta1) * g.batch * g.delta_l / (g.beta3 * g.eta * g.h_ae);
    Ok(EscapeTime::new(prefactor, exponent, order))
}

/// Adam escape time; curvature enters the exponent as `H^{-1/2}`.
pub fn tau_adam(g: &EscapeGeometry) -> Result<EscapeTime> {
    g.validate()?;
    let hb = g.h_be.abs();
    let inner = 1.0 + 4.0 * g.eta * (g.batch * hb).sqrt() / (1.0 - g.beta1);
    let prefactor = PI * (inner.sqrt() + 1.0) * g.det_ratio_ab.abs().powf(0.25) / hb;
    let exponent = 2.0 * g.batch.sqrt() * g.delta_l / g.eta * g.path_sum(f64::sqrt);
    let order = 2.0 * g.batch.sqrt() * g.delta_l / (g.eta * g.h_ae.sqrt());
    Ok(EscapeTime::new(prefactor, exponent, order))
}

/// Adai escape time; the prefactor uses the mean `|H_b|` over all directions.
pub fn tau_adai(g: &EscapeGeometry) -> Result<EscapeTime> {
    g.validate()?;
    if g.n == 0 {
        return Err(Error::InvalidGeometry("n must be positive".into()));
    }
    let hb = g.h_be.abs();
    let inner = 1.0 + 4.0 * g.eta * g.trace_abs_hb / (g.beta0 * g.n as f64);
    let prefactor = PI * (inner.sqrt() + 1.0) / hb;
    let exponent = 2.0 * g.batch * g.delta_l / g.eta * g.path_sum(|h| h);
    let order = 2.0 * g.batch * g.delta_l / (g.eta * g.h_ae);
    Ok(EscapeTime::new(prefactor, exponent, order))
}

/// `D̂/D = (1 - √(1-x))/(x/2)` with `x = 4H/(γ²M)`, evaluated as the
/// equivalent `2/(1 + √(1-x))` which has no cancellation near `x = 0`.
pub fn effective_diffusion_ratio(h: f64, gamma: f64, mass: f64) -> Result<f64> {
    let x = 4.0 * h / (gamma * gamma * mass);
    if !x.is_finite() {
        return Err(Error::Domain(format!("4H/(γ²M) = {x}")));
    }
    if x > 1.0 {
        return Err(Error::Domain(format!("4H/(γ²M) = {x} exceeds 1")));
    }
    Ok(2.0 / (1.0 + (1.0 - x).sqrt()))
}
