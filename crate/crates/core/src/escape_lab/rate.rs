use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{coefficient_of_variation, ks_exponential, ols, LinearFit};

/// Result of one escape trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Iteration at which θ first left the valley.
    pub exit_iter: Option<u64>,
    pub censored: bool,
}

impl TrialOutcome {
    pub fn exited(t: u64) -> Self {
        TrialOutcome {
            exit_iter: Some(t),
            censored: false,
        }
    }

    pub fn censored() -> Self {
        TrialOutcome {
            exit_iter: None,
            censored: true,
        }
    }
}

/// `Γ = (n-2)/Σt` with interval `Γ(1 ± 1.96/√n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeRateEstimate {
    pub gamma: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_trials: usize,
    pub n_censored: usize,
    pub sum_iters: u64,
}

impl EscapeRateEstimate {
    /// Censored trials enter `Σt` at the cap, so Γ is then only a lower bound.
    pub fn is_lower_bound(&self) -> bool {
        self.n_censored > 0
    }

    pub fn neg_log_gamma(&self) -> f64 {
        -self.gamma.ln()
    }
}

/// Censored trials contribute `max_iter` to `Σt`.
pub fn estimate_escape_rate(outcomes: &[TrialOutcome], max_iter: u64) -> Result<EscapeRateEstimate> {
    let n = outcomes.len();
    if n < 3 {
        return Err(Error::Estimation(format!("need at least 3 trials, got {n}")));
    }
    let mut sum: u64 = 0;
    let mut n_censored = 0;
    for o in outcomes {
        match o.exit_iter {
            Some(t) if !o.censored => sum += t,
            _ => {
                sum += max_iter;
                n_censored += 1;
            }
        }
    }
    if sum == 0 {
        return Err(Error::Estimation("total escape time is zero".into()));
    }
    let gamma = (n - 2) as f64 / sum as f64;
    let half = 1.96 / (n as f64).sqrt();
    Ok(EscapeRateEstimate {
        gamma,
        ci_low: gamma * (1.0 - half),
        ci_high: gamma * (1.0 + half),
        n_trials: n,
        n_censored,
        sum_iters: sum,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingLaw {
    InvK,
    InvSqrtK,
}

/// Fits of `-log Γ` against `1/k` and `1/√k` for one optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScalingFit {
    pub inv_k: LinearFit,
    pub inv_sqrt_k: LinearFit,
    pub winner: ScalingLaw,
}

/// Keyed by optimizer name.
pub type ScalingFitReport = BTreeMap<String, ScalingFit>;

pub fn fit_scaling_laws(rates: &[(f64, EscapeRateEstimate)]) -> Result<ScalingFit> {
    if rates.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need at least 4 sharpness values, got {}",
            rates.len()
        )));
    }
    if let Some((k, _)) = rates.iter().find(|(_, r)| 2 * r.n_censored > r.n_trials) {
        return Err(Error::InsufficientData(format!(
            "estimate at k = {k} is mostly censored"
        )));
    }
    let y: Vec<f64> = rates.iter().map(|(_, r)| r.neg_log_gamma()).collect();
    let x1: Vec<f64> = rates.iter().map(|(k, _)| 1.0 / k).collect();
    let x2: Vec<f64> = rates.iter().map(|(k, _)| 1.0 / k.sqrt()).collect();
    let inv_k = ols(&x1, &y)?;
    let inv_sqrt_k = ols(&x2, &y)?;
    let winner = if inv_k.r_squared > inv_sqrt_k.r_squared {
        ScalingLaw::InvK
    } else {
        ScalingLaw::InvSqrtK
    };
    Ok(ScalingFit {
        inv_k,
        inv_sqrt_k,
        winner,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentialityReport {
    pub n: usize,
    pub mean: f64,
    pub cv: f64,
    pub ks: f64,
}

impl ExponentialityReport {
    pub fn cv_within(&self, lo: f64, hi: f64) -> bool {
        (lo..=hi).contains(&self.cv)
    }
}

/// Coefficient of variation and KS distance of the uncensored exit times.
pub fn exponentiality_check(outcomes: &[TrialOutcome]) -> Result<ExponentialityReport> {
    let t: Vec<f64> = outcomes
        .iter()
        .filter(|o| !o.censored)
        .filter_map(|o| o.exit_iter)
        .map(|t| t as f64)
        .collect();
    exponentiality_of(&t)
}

pub fn exponentiality_of(t: &[f64]) -> Result<ExponentialityReport> {
    if t.len() < 30 {
        return Err(Error::InsufficientData(format!("need 30 exit times, got {}", t.len())));
    }
    Ok(ExponentialityReport {
        n: t.len(),
        mean: crate::stats::mean(t),
        cv: coefficient_of_variation(t),
        ks: ks_exponential(t),
    })
}
