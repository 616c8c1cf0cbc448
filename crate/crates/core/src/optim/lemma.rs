//! Displacement weights of the raw first-moment recurrence.
//!
//! Without bias correction `m_t = β₁,t m_{t-1} + (1-β₁,t) g_t`, so the step
//! at time `t` is `-η Σ_k q_{k,t} g_k` with
//! `q_{k,t} = (1-β₁,k) ∏_{i=k+1..t} β₁,i`.

use serde::Serialize;

use super::{OptimizerConfig, OptimizerKind, Trace};
use crate::error::{Error, Result};

/// `q_{k,t}` for one coordinate's inertia history (indexed from step 0).
pub fn displacement_weights(beta1_history: &[f64], k: usize, t: usize) -> Result<f64> {
    if k > t {
        return Err(Error::Index(format!("k = {k} exceeds t = {t}")));
    }
    if t >= beta1_history.len() {
        return Err(Error::Index(format!(
            "t = {t} beyond history of length {}",
            beta1_history.len()
        )));
    }
    let tail: f64 = beta1_history[k + 1..=t].iter().product();
    Ok((1.0 - beta1_history[k]) * tail)
}

/// All weights `q_{0,t} .. q_{t,t}`.
pub fn weight_row(beta1_history: &[f64], t: usize) -> Result<Vec<f64>> {
    if t >= beta1_history.len() {
        return Err(Error::Index(format!(
            "t = {t} beyond history of length {}",
            beta1_history.len()
        )));
    }
    let mut row = vec![0.0; t + 1];
    let mut tail = 1.0;
    for k in (0..=t).rev() {
        row[k] = (1.0 - beta1_history[k]) * tail;
        tail *= beta1_history[k];
    }
    Ok(row)
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma1Report {
    pub steps: usize,
    /// Max over steps of `‖θ_{t+1} - θ_t + η Σ_k q_{k,t} g_k‖₂`.
    pub max_residual: f64,
    /// Smallest `Σ_k q_{k,t} - (1 - β₁,max^{t+1})` over steps and coordinates.
    pub min_lower_margin: f64,
    /// Largest `Σ_k q_{k,t} - 1`.
    pub max_upper_excess: f64,
}

impl Lemma1Report {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_residual < tol && self.min_lower_margin >= -1e-12 && self.max_upper_excess <= 1e-12
    }
}

/// Recomputes every step of a raw-mode Adai trace from its β₁ and gradient
/// history and reports how far the identity is from holding.
pub fn lemma1_check(config: &OptimizerConfig, trace: &Trace) -> Result<Lemma1Report> {
    if !matches!(config.kind, OptimizerKind::Adai | OptimizerKind::AdaiW) {
        return Err(Error::Mode(format!("identity applies to Adai, got {}", config.kind)));
    }
    if config.bias_correction {
        return Err(Error::Mode("identity holds only without bias correction".into()));
    }
    if config.uses_decoupled_decay() && config.lambda != 0.0 {
        return Err(Error::Mode("decoupled decay adds a term outside the recurrence".into()));
    }
    let steps = trace.records.len();
    if steps == 0 || trace.thetas.len() != steps + 1 {
        return Err(Error::MissingHistory(format!(
            "{} records and {} parameter snapshots",
            steps,
            trace.thetas.len()
        )));
    }
    let n = trace.thetas[0].len();
    if trace
        .records
        .iter()
        .any(|r| r.beta1_vec.len() != n || r.grad.len() != n)
    {
        return Err(Error::MissingHistory("record dimension differs from parameters".into()));
    }

    let b1_max = config.beta1_max();
    let eta = config.eta;
    let mut hist: Vec<Vec<f64>> = vec![Vec::with_capacity(steps); n];
    let mut report = Lemma1Report {
        steps,
        max_residual: 0.0,
        min_lower_margin: f64::INFINITY,
        max_upper_excess: f64::NEG_INFINITY,
    };
    for t in 0..steps {
        for (i, h) in hist.iter_mut().enumerate() {
            h.push(trace.records[t].beta1_vec[i]);
        }
        let lower = 1.0 - b1_max.powi(t as i32 + 1);
        let mut res_sq = 0.0;
        for (i, h) in hist.iter().enumerate() {
            let row = weight_row(h, t)?;
            let mut acc = 0.0;
            let mut sum = 0.0;
            for (k, q) in row.iter().enumerate() {
                acc += q * trace.records[k].grad[i];
                sum += q;
            }
            let r = trace.thetas[t + 1][i] - trace.thetas[t][i] + eta * acc;
            res_sq += r * r;
            report.min_lower_margin = report.min_lower_margin.min(sum - lower);
            report.max_upper_excess = report.max_upper_excess.max(sum - 1.0);
        }
        report.max_residual = report.max_residual.max(res_sq.sqrt());
    }
    Ok(report)
}
