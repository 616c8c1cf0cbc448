use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{init_state, step_in_place, OptimizerConfig, ParamVector};
use crate::problems::{Objective, TwoBasin};
use crate::rng::labeled_stream;
use crate::stats::{two_proportion_greater, ProportionTest};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharpnessProbeConfig {
    pub sigma: f64,
    pub samples: usize,
    pub theta_star: ParamVector,
    pub seed: u64,
}

/// Monte-Carlo `E_ζ[L(θ* + ζ) - L(θ*)]` with `ζ ~ N(0, σ²I)`.
pub fn expected_sharpness<O: Objective + ?Sized>(obj: &O, probe: &SharpnessProbeConfig) -> Result<f64> {
    if !(probe.sigma > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "sigma must be positive, got {}",
            probe.sigma
        )));
    }
    if probe.samples == 0 {
        return Err(Error::InvalidConfig("samples must be positive".into()));
    }
    let base = obj.loss(&probe.theta_star)?;
    let mut rng = labeled_stream(probe.seed, "sharpness", 0);
    let mut x = probe.theta_star.0.clone();
    let mut total = 0.0;
    for _ in 0..probe.samples {
        for (xi, &t) in x.iter_mut().zip(probe.theta_star.iter()) {
            *xi = t + probe.sigma * rng.sample::<f64, _>(StandardNormal);
        }
        total += obj.loss(&x)? - base;
    }
    Ok(total / probe.samples as f64)
}

/// Gradient noise model for the two-basin runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasinNoise {
    /// `g = h'(x) + std·z`.
    Isotropic { std: f64 },
    /// `g = h'(x) + scale·√|h''(x)|·z`: noise covariance tracks the local
    /// curvature, as minibatch noise does near a minimum.
    Curvature { scale: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinSelectionConfig {
    pub trials: usize,
    pub iters: u64,
    /// Starts are uniform on `[-init_range, init_range]` per coordinate.
    pub init_range: f64,
    pub noise: BasinNoise,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BasinOutcome {
    pub optimizer: String,
    pub eta: f64,
    /// Coordinates that ended in the flat basin.
    pub flat: usize,
    pub total: usize,
    pub flat_fraction: f64,
    pub aborted: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BasinSelectionReport {
    pub barrier: f64,
    pub outcomes: Vec<BasinOutcome>,
}

impl BasinSelectionReport {
    /// One-sided test that optimizer `a` lands in the flat basin more often than `b`.
    pub fn compare(&self, a: usize, b: usize) -> ProportionTest {
        let (x, y) = (&self.outcomes[a], &self.outcomes[b]);
        two_proportion_greater(x.flat, x.total, y.flat, y.total)
    }
}

/// Runs every optimizer from the same random starts and counts, per
/// coordinate, how often the final point lies left of the barrier.
///
/// Starts are shared across optimizers (stream `basin-init`); gradient noise
/// uses one stream per optimizer and trial.
pub fn basin_selection_experiment(
    obj: &TwoBasin,
    optimizers: &[OptimizerConfig],
    config: &BasinSelectionConfig,
) -> Result<BasinSelectionReport> {
    if config.trials == 0 || config.iters == 0 {
        return Err(Error::InvalidConfig("trials and iters must be positive".into()));
    }
    let barrier = obj.barrier();
    let n = obj.n;
    let mut outcomes = Vec::new();
    for (idx, opt) in optimizers.iter().enumerate() {
        opt.validate()?;
        let run = |trial: usize| -> Option<usize> {
            let mut init = labeled_stream(config.seed, "basin-init", trial as u64);
            let mut theta: Vec<f64> = (0..n)
                .map(|_| init.random_range(-config.init_range..=config.init_range))
                .collect();
            let mut rng = labeled_stream(config.seed, &format!("basin-noise:{idx}"), trial as u64);
            let mut state = init_state(opt, n).ok()?;
            let mut g = vec![0.0; n];
            for _ in 0..config.iters {
                for i in 0..n {
                    let x = theta[i];
                    let s = match config.noise {
                        BasinNoise::Isotropic { std } => std,
                        BasinNoise::Curvature { scale } => scale * obj.d2h(x).abs().sqrt(),
                    };
                    let z: f64 = rng.sample(StandardNormal);
                    g[i] = obj.dh(x) + s * z;
                }
                step_in_place(opt, &mut state, &mut theta, &g).ok()?;
            }
            Some(theta.iter().filter(|&&x| x < barrier).count())
        };
        let mut flat = 0;
        let mut ok = 0;
        let aborted = crate::par::for_each_trial(config.trials, run, |c| {
            flat += c;
            ok += 1;
        });
        let total = ok * n;
        outcomes.push(BasinOutcome {
            optimizer: opt.kind.name().to_string(),
            eta: opt.eta,
            flat,
            total,
            flat_fraction: if total > 0 {
                flat as f64 / total as f64
            } else {
                f64::NAN
            },
            aborted,
        });
    }
    Ok(BasinSelectionReport { barrier, outcomes })
}

/// Flat fractions keyed by optimizer name, for JSON output.
pub fn fractions(report: &BasinSelectionReport) -> BTreeMap<String, f64> {
    report
        .outcomes
        .iter()
        .map(|o| (o.optimizer.clone(), o.flat_fraction))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::QuadraticSaddle;

    #[test]
    fn quadratic_sharpness() {
        let q = QuadraticSaddle::new(vec![1.0, 2.0, 3.0, 4.0], 1).unwrap();
        let probe = SharpnessProbeConfig {
            sigma: 0.1,
            samples: 10_000,
            theta_star: ParamVector::zeros(4),
            seed: 1,
        };
        let e = expected_sharpness(&q, &probe).unwrap();
        let exact = 0.01 / 2.0 * 10.0;
        assert!((e / exact - 1.0).abs() < 0.1, "{e}");
        let tiny = SharpnessProbeConfig { sigma: 1e-8, ..probe };
        assert!(expected_sharpness(&q, &tiny).unwrap().abs() < 1e-14);
    }

    #[test]
    fn zero_noise_selection_is_optimizer_independent() {
        let tb = TwoBasin::new(2, 0.9).unwrap();
        let cfg = BasinSelectionConfig {
            trials: 200,
            iters: 3000,
            init_range: 2.0,
            noise: BasinNoise::Isotropic { std: 0.0 },
            seed: 3,
        };
        let opts = [OptimizerConfig::sgd(0.01), OptimizerConfig::heavy_ball(0.001, 0.9, 1.0)];
        let r = basin_selection_experiment(&tb, &opts, &cfg).unwrap();
        assert_eq!(r.outcomes[0].flat, r.outcomes[1].flat);
        assert_eq!(r.outcomes[0].total, 400);
    }
}
