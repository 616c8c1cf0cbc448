//! Monte-Carlo displacement statistics on quadratic saddles.
//!
//! Every trial starts at θ = 0 with zeroed optimizer state and draws its
//! gradient noise from its own stream `(seed, "saddle", trial)`. Results are
//! accumulated in trial order, so they do not depend on the thread count.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{init_state, step_in_place, OptimizerConfig, OptimizerKind, OptimizerState};
use crate::par::for_each_trial;
use crate::problems::QuadraticSaddle;
use crate::rng::{labeled_stream, StreamRng};
use crate::theory::{
    drift_adai, equilibrium_velocity_variance, msd_adam_iterations, msd_momentum, msd_sgd, DynamicsParams,
    SaddleSpectrum,
};

/// `e^{-5.3} < 0.005`, so `[1 - e^{-(1-β₁)T}]² > 0.99` after this many relaxation times.
const RELAXATION_TIMES: f64 = 5.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddleExperimentConfig {
    pub optimizer: OptimizerConfig,
    /// Hessian eigenvalues `H_i` (coordinate aligned).
    pub h: Vec<f64>,
    pub batch: usize,
    pub t_max: u64,
    pub record_every: u64,
    pub trials: usize,
    pub seed: u64,
    /// Steps run before measurement starts (velocity and drift checks only).
    pub burn_in: u64,
    /// When false the gradient is the exact linear field.
    pub noise: bool,
}

impl SaddleExperimentConfig {
    pub fn new(optimizer: OptimizerConfig, h: Vec<f64>, batch: usize, t_max: u64) -> Self {
        SaddleExperimentConfig {
            optimizer,
            h,
            batch,
            t_max,
            record_every: (t_max / 100).max(1),
            trials: 1000,
            seed: 0,
            burn_in: 0,
            noise: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be positive".into()));
        }
        if self.record_every == 0 || self.t_max == 0 {
            return Err(Error::InvalidConfig("t_max and record_every must be positive".into()));
        }
        self.objective().map(|_| ())
    }

    pub fn spectrum(&self) -> Result<SaddleSpectrum> {
        SaddleSpectrum::new(self.h.clone(), self.optimizer.eta, self.batch)
    }

    fn objective(&self) -> Result<QuadraticSaddle> {
        let q = QuadraticSaddle::new(self.h.clone(), self.batch)?;
        Ok(if self.noise { q } else { q.without_noise() })
    }

    fn record_times(&self) -> Vec<u64> {
        (1..=self.t_max / self.record_every)
            .map(|i| i * self.record_every)
            .collect()
    }
}

/// Per-direction displacement moments across trials at each recorded step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsdTrace {
    pub times: Vec<u64>,
    /// `msd[r][i]`: mean of `Δθ_i²` at `times[r]`.
    pub msd: Vec<Vec<f64>>,
    /// Mean of `Δθ_i`.
    pub mean_disp: Vec<Vec<f64>>,
    /// Standard error of `msd`.
    pub stderr: Vec<Vec<f64>>,
    pub trials: usize,
    pub aborted: usize,
}

struct Sim {
    obj: QuadraticSaddle,
    config: OptimizerConfig,
    state: OptimizerState,
    theta: Vec<f64>,
    g: Vec<f64>,
}

impl Sim {
    fn new(cfg: &SaddleExperimentConfig) -> Result<Self> {
        let n = cfg.h.len();
        Ok(Sim {
            obj: cfg.objective()?,
            config: cfg.optimizer,
            state: init_state(&cfg.optimizer, n)?,
            theta: vec![0.0; n],
            g: vec![0.0; n],
        })
    }

    /// One noisy step; `false` once the state has gone non-finite.
    #[inline]
    fn step(&mut self, rng: &mut StreamRng) -> bool {
        self.obj.stochastic_grad_into(&self.theta, rng, &mut self.g);
        step_in_place(&self.config, &mut self.state, &mut self.theta, &self.g).is_ok()
            && self.theta.iter().all(|x| x.is_finite())
    }
}

fn trial_rng(seed: u64, trial: usize) -> StreamRng {
    labeled_stream(seed, "saddle", trial as u64)
}

fn check_aborted(aborted: usize, trials: usize) -> Result<()> {
    if aborted * 100 > trials {
        Err(Error::TooManyAborted { aborted, trials })
    } else {
        Ok(())
    }
}

/// Empirical MSD, drift and standard errors at every `record_every` steps.
pub fn run_msd(config: &SaddleExperimentConfig) -> Result<MsdTrace> {
    config.validate()?;
    let n = config.h.len();
    let times = config.record_times();
    let slots = times.len() * n;
    let (mut s1, mut s2, mut s4) = (vec![0.0; slots], vec![0.0; slots], vec![0.0; slots]);
    let mut ok = 0usize;

    let run = |trial: usize| -> Option<Vec<f64>> {
        let mut sim = Sim::new(config).ok()?;
        let mut rng = trial_rng(config.seed, trial);
        let mut rec = Vec::with_capacity(slots);
        for it in 1..=config.t_max {
            if !sim.step(&mut rng) {
                return None;
            }
            if it % config.record_every == 0 {
                rec.extend_from_slice(&sim.theta);
            }
        }
        Some(rec)
    };
    let aborted = for_each_trial(config.trials, run, |rec| {
        ok += 1;
        for (k, x) in rec.into_iter().enumerate() {
            let x2 = x * x;
            s1[k] += x;
            s2[k] += x2;
            s4[k] += x2 * x2;
        }
    });
    check_aborted(aborted, config.trials)?;
    if ok == 0 {
        return Err(Error::TooManyAborted {
            aborted,
            trials: config.trials,
        });
    }

    let m = ok as f64;
    let rows = |f: &dyn Fn(usize) -> f64| -> Vec<Vec<f64>> {
        (0..times.len())
            .map(|r| (0..n).map(|i| f(r * n + i)).collect())
            .collect()
    };
    Ok(MsdTrace {
        msd: rows(&|k| s2[k] / m),
        mean_disp: rows(&|k| s1[k] / m),
        stderr: rows(&|k| ((s4[k] / m - (s2[k] / m).powi(2)).max(0.0) / m).sqrt()),
        times,
        trials: config.trials,
        aborted,
    })
}

/// Ideal Adai inertia at a noise-dominated saddle: `1 - β₀|H_i|/mean|H|`, clipped.
pub fn adai_ideal_beta1(config: &OptimizerConfig, h: &[f64]) -> Vec<f64> {
    let mean_abs = h.iter().map(|x| x.abs()).sum::<f64>() / h.len() as f64;
    h.iter()
        .map(|x| {
            if mean_abs == 0.0 {
                1.0 - config.beta0
            } else {
                1.0 - config.beta0 * x.abs() / mean_abs
            }
            .clamp(0.0, config.beta1_max())
        })
        .collect()
}

/// Theoretical `(msd, drift term)` per direction after `iter` steps.
///
/// SGD and heavy ball use dynamical time `ηT`; Adam uses its iteration form;
/// Adai uses the heavy-ball formula with the ideal per-direction inertia.
pub fn predict(config: &SaddleExperimentConfig, iter: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let spec = config.spectrum()?;
    let opt = &config.optimizer;
    let t = opt.eta * iter as f64;
    Ok(match opt.kind {
        OptimizerKind::Sgd => (msd_sgd(&spec, t).total, vec![0.0; spec.h.len()]),
        OptimizerKind::HeavyBall => {
            let p = msd_momentum(&spec, &DynamicsParams::new(opt.eta, opt.beta1, opt.beta3)?, t);
            (p.total, p.drift_sq)
        }
        OptimizerKind::Adam => {
            let (d, s) = msd_adam_iterations(opt.eta, opt.beta1, iter as f64);
            (vec![d + s; spec.h.len()], vec![d; spec.h.len()])
        }
        OptimizerKind::Adai | OptimizerKind::AdaiW => {
            let mut total = Vec::new();
            let mut drift = Vec::new();
            for (i, b1) in adai_ideal_beta1(opt, &spec.h).into_iter().enumerate() {
                let one = SaddleSpectrum::new(vec![spec.h[i]], opt.eta, spec.batch)?;
                let p = msd_momentum(&one, &DynamicsParams::new(opt.eta, b1, 1.0 - b1)?, t);
                total.push(p.total[0]);
                drift.push(p.drift_sq[0]);
            }
            (total, drift)
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsdRow {
    pub optimizer: String,
    pub direction: usize,
    #[serde(rename = "H_i")]
    pub h_i: f64,
    pub iter: u64,
    pub msd: f64,
    pub drift: f64,
    pub stderr: f64,
    pub predicted_msd: f64,
    /// Momentum-drift term of the predicted MSD (a squared displacement).
    pub predicted_drift: f64,
}

pub fn msd_rows(config: &SaddleExperimentConfig, trace: &MsdTrace) -> Result<Vec<MsdRow>> {
    let mut rows = Vec::new();
    for (r, &iter) in trace.times.iter().enumerate() {
        let (pm, pd) = predict(config, iter)?;
        for (i, &h_i) in config.h.iter().enumerate() {
            rows.push(MsdRow {
                optimizer: config.optimizer.kind.name().to_string(),
                direction: i,
                h_i,
                iter,
                msd: trace.msd[r][i],
                drift: trace.mean_disp[r][i],
                stderr: trace.stderr[r][i],
                predicted_msd: pm[i],
                predicted_drift: pd[i],
            });
        }
    }
    Ok(rows)
}

pub fn write_msd_csv(path: &Path, rows: &[MsdRow]) -> Result<()> {
    crate::output::write_csv(path, rows)
}

/// Squared momentum drift per direction compared with the Adai prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaiDriftReport {
    pub h: Vec<f64>,
    /// Steps after release at which each direction is read out.
    pub windows: Vec<u64>,
    pub drift_sq: Vec<f64>,
    pub stderr: Vec<f64>,
    pub predicted: f64,
    pub rel_dev: Vec<f64>,
    /// `min drift² / max drift²` across directions.
    pub isotropy_ratio: f64,
    pub trials: usize,
    pub aborted: usize,
}

/// Measures the displacement carried by the momentum built up at a saddle.
///
/// Each trial holds θ at 0 for `burn_in` steps so that `v` and `m` reach
/// their stationary noise-driven values, then releases it and continues two
/// antithetic copies (noise `+ξ` and `-ξ`). Their midpoint cancels the fresh
/// diffusion to first order and leaves the drift from the initial momentum.
/// Direction `i` is read after `⌈5.3/(1-β₁,i)⌉` steps, when
/// `[1 - e^{-(1-β₁)T}]² > 0.99`.
pub fn adai_drift_check(config: &SaddleExperimentConfig) -> Result<AdaiDriftReport> {
    config.validate()?;
    let opt = config.optimizer;
    if !opt.kind.is_adai() {
        return Err(Error::Mode(format!("drift check needs Adai, got {}", opt.kind)));
    }
    let n = config.h.len();
    let windows: Vec<u64> = adai_ideal_beta1(&opt, &config.h)
        .iter()
        .map(|b| (RELAXATION_TIMES / (1.0 - b)).ceil() as u64)
        .collect();
    let w_max = *windows.iter().max().unwrap_or(&1);
    let obj = config.objective()?;

    let run = |trial: usize| -> Option<Vec<f64>> {
        let mut rng = trial_rng(config.seed, trial);
        let mut state = init_state(&opt, n).ok()?;
        let zero = vec![0.0; n];
        let mut g = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        for _ in 0..config.burn_in {
            obj.stochastic_grad_into(&zero, &mut rng, &mut g);
            scratch.fill(0.0);
            step_in_place(&opt, &mut state, &mut scratch, &g).ok()?;
        }
        let mut sb = state.clone();
        let (mut ta, mut tb) = (vec![0.0; n], vec![0.0; n]);
        let (mut ga, mut gb) = (vec![0.0; n], vec![0.0; n]);
        let mut out = vec![0.0; n];
        for s in 1..=w_max {
            obj.stochastic_grad_into(&zero, &mut rng, &mut g);
            for i in 0..n {
                ga[i] = config.h[i] * ta[i] + g[i];
                gb[i] = config.h[i] * tb[i] - g[i];
            }
            step_in_place(&opt, &mut state, &mut ta, &ga).ok()?;
            step_in_place(&opt, &mut sb, &mut tb, &gb).ok()?;
            for i in 0..n {
                if s == windows[i] {
                    out[i] = 0.5 * (ta[i] + tb[i]);
                }
            }
        }
        out.iter().all(|x| x.is_finite()).then_some(out)
    };
    let (mut s2, mut s4) = (vec![0.0; n], vec![0.0; n]);
    let mut ok = 0usize;
    let aborted = for_each_trial(config.trials, run, |d| {
        ok += 1;
        for i in 0..n {
            let x2 = d[i] * d[i];
            s2[i] += x2;
            s4[i] += x2 * x2;
        }
    });
    check_aborted(aborted, config.trials)?;
    if ok == 0 {
        return Err(Error::TooManyAborted {
            aborted,
            trials: config.trials,
        });
    }
    let m = ok as f64;
    let drift_sq: Vec<f64> = s2.iter().map(|s| s / m).collect();
    let stderr = (0..n)
        .map(|i| ((s4[i] / m - drift_sq[i].powi(2)).max(0.0) / m).sqrt())
        .collect();
    let predicted = drift_adai(&config.h, opt.eta, opt.beta0, config.batch);
    let rel_dev = drift_sq.iter().map(|d| d / predicted - 1.0).collect();
    let lo = drift_sq.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = drift_sq.iter().cloned().fold(0.0, f64::max);
    Ok(AdaiDriftReport {
        h: config.h.clone(),
        windows,
        drift_sq,
        stderr,
        predicted,
        rel_dev,
        isotropy_ratio: if hi > 0.0 { lo / hi } else { f64::NAN },
        trials: config.trials,
        aborted,
    })
}

/// MSD in the direction of largest `|H|` over that of smallest `|H|`, at `t_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropyReport {
    pub optimizer: OptimizerKind,
    pub h: Vec<f64>,
    pub msd: Vec<f64>,
    pub stderr: Vec<f64>,
    pub ratio: f64,
    pub abs_h_ratio: f64,
}

/// For Adam the ratio should be near 1; for SGD near the `|H|` ratio.
pub fn adam_isotropy_check(config: &SaddleExperimentConfig) -> Result<IsotropyReport> {
    let cfg = SaddleExperimentConfig {
        record_every: config.t_max,
        ..config.clone()
    };
    let trace = run_msd(&cfg)?;
    let last = trace.times.len() - 1;
    let abs: Vec<f64> = cfg.h.iter().map(|x| x.abs()).collect();
    let by = |better: fn(f64, f64) -> bool| {
        (0..abs.len()).fold(0, |best, i| if better(abs[i], abs[best]) { i } else { best })
    };
    let (lo, hi) = (by(|a, b| a < b), by(|a, b| a > b));
    let msd = trace.msd[last].clone();
    Ok(IsotropyReport {
        optimizer: cfg.optimizer.kind,
        ratio: if msd[lo] > 0.0 { msd[hi] / msd[lo] } else { f64::NAN },
        abs_h_ratio: abs[hi] / abs[lo],
        h: cfg.h.clone(),
        stderr: trace.stderr[last].clone(),
        msd,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityReport {
    pub h: Vec<f64>,
    /// Variance of `Δθ/η` per direction after burn-in.
    pub velocity_var: Vec<f64>,
    pub predicted: Vec<f64>,
    pub rel_dev: Vec<f64>,
    pub samples: usize,
}

/// Stationary heavy-ball velocity variance against `D/(γM²)`.
///
/// Samples every step from `burn_in` to `t_max` in every trial.
pub fn equilibrium_velocity_check(config: &SaddleExperimentConfig) -> Result<VelocityReport> {
    config.validate()?;
    let opt = config.optimizer;
    if opt.kind != OptimizerKind::HeavyBall {
        return Err(Error::Mode(format!(
            "velocity check needs heavy ball, got {}",
            opt.kind
        )));
    }
    if config.h.iter().any(|&h| h <= 0.0) || config.burn_in >= config.t_max {
        return Err(Error::InvalidConfig(
            "needs positive curvature and burn_in < t_max".into(),
        ));
    }
    let n = config.h.len();
    let run = |trial: usize| -> Option<(Vec<f64>, Vec<f64>)> {
        let mut sim = Sim::new(config).ok()?;
        let mut rng = trial_rng(config.seed, trial);
        let (mut s1, mut s2) = (vec![0.0; n], vec![0.0; n]);
        for it in 1..=config.t_max {
            if !sim.step(&mut rng) {
                return None;
            }
            if it > config.burn_in {
                for i in 0..n {
                    let u = sim.state.last_update[i] / opt.eta;
                    s1[i] += u;
                    s2[i] += u * u;
                }
            }
        }
        Some((s1, s2))
    };
    let (mut s1, mut s2) = (vec![0.0; n], vec![0.0; n]);
    let mut ok = 0usize;
    let aborted = for_each_trial(config.trials, run, |(a, b)| {
        ok += 1;
        for i in 0..n {
            s1[i] += a[i];
            s2[i] += b[i];
        }
    });
    check_aborted(aborted, config.trials)?;
    let samples = ok * (config.t_max - config.burn_in) as usize;
    let m = samples as f64;
    let velocity_var: Vec<f64> = (0..n).map(|i| s2[i] / m - (s1[i] / m).powi(2)).collect();
    let dynamics = DynamicsParams::new(opt.eta, opt.beta1, opt.beta3)?;
    let spec = config.spectrum()?;
    let predicted: Vec<f64> = spec
        .d
        .iter()
        .map(|&d| equilibrium_velocity_variance(d, &dynamics))
        .collect();
    let rel_dev = velocity_var.iter().zip(&predicted).map(|(v, p)| v / p - 1.0).collect();
    Ok(VelocityReport {
        h: config.h.clone(),
        velocity_var,
        predicted,
        rel_dev,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sgd_cfg(trials: usize) -> SaddleExperimentConfig {
        SaddleExperimentConfig {
            trials,
            record_every: 10,
            ..SaddleExperimentConfig::new(OptimizerConfig::sgd(0.1), vec![1e-3, -1e-3], 10, 100)
        }
    }

    #[test]
    fn zero_noise_stays_at_critical_point() {
        for opt in [
            OptimizerConfig::sgd(0.1),
            OptimizerConfig::heavy_ball(0.1, 0.9, 0.1),
            OptimizerConfig::adam(0.01),
            OptimizerConfig::adai(0.01),
        ] {
            let cfg = SaddleExperimentConfig {
                noise: false,
                trials: 4,
                ..sgd_cfg(4)
            };
            let cfg = SaddleExperimentConfig { optimizer: opt, ..cfg };
            let t = run_msd(&cfg).unwrap();
            assert!(t.msd.iter().flatten().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn reproducible_and_consistent() {
        let a = run_msd(&sgd_cfg(300)).unwrap();
        let b = run_msd(&sgd_cfg(300)).unwrap();
        assert_eq!(a, b);
        for r in 0..a.times.len() {
            for i in 0..2 {
                assert!(a.msd[r][i] - a.mean_disp[r][i].powi(2) >= -4.0 * a.stderr[r][i].powi(2));
            }
        }
        assert_eq!(a.times.first(), Some(&10));
        assert_eq!(a.times.last(), Some(&100));
    }

    #[test]
    fn csv_rows_have_predictions() {
        let cfg = sgd_cfg(50);
        let t = run_msd(&cfg).unwrap();
        let rows = msd_rows(&cfg, &t).unwrap();
        assert_eq!(rows.len(), 20);
        let bytes = crate::output::csv_bytes(&rows).unwrap();
        let head = String::from_utf8(bytes).unwrap();
        assert!(head.starts_with("optimizer,direction,H_i,iter,msd,drift,stderr,predicted_msd,predicted_drift\n"));
    }

    #[test]
    fn tiny_step_has_tiny_drift() {
        let cfg = SaddleExperimentConfig {
            trials: 50,
            burn_in: 500,
            ..SaddleExperimentConfig::new(OptimizerConfig::adai(1e-6), vec![0.0198, -1.9802], 10, 1)
        };
        let r = adai_drift_check(&cfg).unwrap();
        assert!(r.drift_sq.iter().all(|&d| d < 1e-11));
    }

    #[test]
    fn mode_checks() {
        let cfg = sgd_cfg(3);
        assert!(matches!(adai_drift_check(&cfg), Err(Error::Mode(_))));
        assert!(matches!(equilibrium_velocity_check(&cfg), Err(Error::Mode(_))));
    }
}
