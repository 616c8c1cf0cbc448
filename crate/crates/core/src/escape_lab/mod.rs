//! Escape experiments on the rescaled Styblinski–Tang valley, the
//! expected-sharpness probe and two-basin minima selection.

mod rate;
mod selection;

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use rate::{
    estimate_escape_rate, exponentiality_check, exponentiality_of, fit_scaling_laws, EscapeRateEstimate,
    ExponentialityReport, ScalingFit, ScalingFitReport, ScalingLaw, TrialOutcome,
};
pub use selection::{
    basin_selection_experiment, expected_sharpness, fractions, BasinNoise, BasinOutcome, BasinSelectionConfig,
    BasinSelectionReport, SharpnessProbeConfig,
};

use crate::error::{Error, Result};
use crate::optim::{init_state, step_in_place, OptimizerConfig, OptimizerKind};
use crate::problems::{critical_points, Dataset, Objective, StyblinskiTang};
use crate::rng::{label_id, stream};

pub const DEFAULT_K_GRID: [f64; 5] = [1.0, 1.5, 2.0, 2.5, 3.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeExperimentConfig {
    pub optimizer: OptimizerConfig,
    pub batch: usize,
    pub k_grid: Vec<f64>,
    pub trials: usize,
    pub max_iter: u64,
    pub seed: u64,
    /// When false each step uses the full-data gradient.
    pub noise: bool,
}

impl EscapeExperimentConfig {
    /// Adai η = 0.001, heavy ball η = 0.0001 with β₁ = 0.9 and β₃ = 1,
    /// Adam η = 0.03, SGD η = 0.001; B = 10, 100 trials, cap 10⁷.
    pub fn defaults_for(kind: OptimizerKind) -> Self {
        let optimizer = match kind {
            OptimizerKind::Adai => OptimizerConfig::adai(1e-3),
            OptimizerKind::AdaiW => OptimizerConfig::adaiw(1e-3, 0.0),
            OptimizerKind::HeavyBall => OptimizerConfig::heavy_ball(1e-4, 0.9, 1.0),
            OptimizerKind::Adam => OptimizerConfig::adam(0.03),
            OptimizerKind::Sgd => OptimizerConfig::sgd(1e-3),
        };
        EscapeExperimentConfig {
            optimizer,
            batch: 10,
            k_grid: DEFAULT_K_GRID.to_vec(),
            trials: 100,
            max_iter: 10_000_000,
            seed: 0,
            noise: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.trials < 3 {
            return Err(Error::InvalidConfig(format!(
                "need at least 3 trials, got {}",
                self.trials
            )));
        }
        if self.batch == 0 || self.max_iter == 0 {
            return Err(Error::InvalidConfig("batch and max_iter must be positive".into()));
        }
        if self.k_grid.iter().any(|&k| !(k > 0.0 && k.is_finite())) {
            return Err(Error::InvalidConfig("sharpness factors must be positive".into()));
        }
        Ok(())
    }
}

fn trial_stream(config: &EscapeExperimentConfig, k: f64, trial: usize) -> crate::rng::StreamRng {
    let label = format!("escape:{}:{:016x}", config.optimizer.kind.name(), k.to_bits());
    stream(config.seed, label_id(&label), trial as u64)
}

/// One trajectory from `θ₀ = a/√k` until some coordinate reaches `b/√k`.
pub fn run_escape_trial(
    config: &EscapeExperimentConfig,
    data: &Arc<Dataset>,
    k: f64,
    trial_index: usize,
) -> Result<TrialOutcome> {
    let obj = StyblinskiTang::new(Arc::clone(data), k)?;
    let n = data.dim;
    let cp = critical_points();
    let sk = k.sqrt();
    let bound = cp.b / sk;
    let mut theta = vec![cp.a / sk; n];
    let mut state = init_state(&config.optimizer, n)?;
    let mut g = vec![0.0; n];
    let mut rng = trial_stream(config, k, trial_index);
    for t in 1..=config.max_iter {
        if config.noise {
            obj.minibatch_grad_into(&theta, config.batch, &mut rng, &mut g)?;
        } else {
            g.copy_from_slice(&obj.grad(&theta)?);
        }
        step_in_place(&config.optimizer, &mut state, &mut theta, &g)?;
        if theta.iter().any(|&x| x >= bound) {
            return Ok(TrialOutcome::exited(t));
        }
    }
    Ok(TrialOutcome::censored())
}

/// All trials at one sharpness factor, in trial order.
pub fn run_escape_cell(config: &EscapeExperimentConfig, data: &Arc<Dataset>, k: f64) -> Result<Vec<TrialOutcome>> {
    config.validate()?;
    (0..config.trials)
        .into_par_iter()
        .with_max_len(1)
        .map(|i| run_escape_trial(config, data, k, i))
        .collect()
}

/// Trials, rate estimates and the scaling fit for one optimizer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EscapeRun {
    pub optimizer: String,
    pub cells: Vec<EscapeCell>,
    pub fit: Option<ScalingFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EscapeCell {
    pub k: f64,
    pub outcomes: Vec<TrialOutcome>,
    pub rate: EscapeRateEstimate,
}

pub fn run_escape_experiment(config: &EscapeExperimentConfig, data: &Arc<Dataset>) -> Result<EscapeRun> {
    config.validate()?;
    let mut cells = Vec::new();
    for &k in &config.k_grid {
        let outcomes = run_escape_cell(config, data, k)?;
        let rate = estimate_escape_rate(&outcomes, config.max_iter)?;
        cells.push(EscapeCell { k, outcomes, rate });
    }
    let pairs: Vec<(f64, EscapeRateEstimate)> = cells.iter().map(|c| (c.k, c.rate)).collect();
    let fit = fit_scaling_laws(&pairs).ok();
    Ok(EscapeRun {
        optimizer: config.optimizer.kind.name().to_string(),
        cells,
        fit,
    })
}

#[derive(Serialize)]
struct TrialRow<'a> {
    optimizer: &'a str,
    k: f64,
    trial: usize,
    exit_iter: Option<u64>,
    censored: bool,
}

#[derive(Serialize)]
struct RateRow<'a> {
    optimizer: &'a str,
    k: f64,
    gamma: f64,
    ci_low: f64,
    ci_high: f64,
    neg_log_gamma: f64,
    n_censored: usize,
}

/// Writes `escape_trials.csv`, `escape_rates.csv` and `scaling_fits.json`.
pub fn write_escape_outputs(dir: &Path, runs: &[EscapeRun]) -> Result<()> {
    let mut trials = Vec::new();
    let mut rates = Vec::new();
    let mut fits = ScalingFitReport::new();
    for run in runs {
        for c in &run.cells {
            for (i, o) in c.outcomes.iter().enumerate() {
                trials.push(TrialRow {
                    optimizer: &run.optimizer,
                    k: c.k,
                    trial: i,
                    exit_iter: o.exit_iter,
                    censored: o.censored,
                });
            }
            rates.push(RateRow {
                optimizer: &run.optimizer,
                k: c.k,
                gamma: c.rate.gamma,
                ci_low: c.rate.ci_low,
                ci_high: c.rate.ci_high,
                neg_log_gamma: c.rate.neg_log_gamma(),
                n_censored: c.rate.n_censored,
            });
        }
        if let Some(f) = run.fit {
            fits.insert(run.optimizer.clone(), f);
        }
    }
    crate::output::write_csv(&dir.join("escape_trials.csv"), &trials)?;
    crate::output::write_csv(&dir.join("escape_rates.csv"), &rates)?;
    crate::output::write_json(&dir.join("scaling_fits.json"), &fits)
}
