//! Checks of the Adai convergence bound and the displacement identity on a
//! smooth problem with bounded gradients.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::optim::{
    init_state, lemma1_check, step_in_place, Lemma1Report, Optimizer, OptimizerConfig, ParamVector, Trace,
};
use crate::par::for_each_trial;
use crate::problems::Objective;
use crate::rng::labeled_stream;
use crate::theory::{convergence_bound, ConvergenceBound, ConvergenceBoundInputs};

/// `L(θ) = Σ (√(1+θ_i²) - 1)` with additive Gaussian gradient noise.
///
/// Smoothness is 1, `‖∇L‖ < √n` and `L* = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothProblemSpec {
    pub n: usize,
    /// Per-coordinate noise standard deviation.
    pub noise_std: f64,
}

impl SmoothProblemSpec {
    pub fn smoothness(&self) -> f64 {
        1.0
    }

    pub fn grad_bound(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    /// `δ² = n σ²`.
    pub fn delta_sq(&self) -> f64 {
        self.n as f64 * self.noise_std * self.noise_std
    }

    /// Point with `θ_i` equal so that `L(θ) = target`.
    pub fn point_with_loss(&self, target: f64) -> ParamVector {
        let per = target / self.n as f64;
        ParamVector::filled(self.n, ((1.0 + per).powi(2) - 1.0).sqrt())
    }

    #[inline]
    fn grad_into(theta: &[f64], out: &mut [f64]) {
        for (o, &t) in out.iter_mut().zip(theta) {
            *o = t / (1.0 + t * t).sqrt();
        }
    }
}

impl Objective for SmoothProblemSpec {
    fn dim(&self) -> usize {
        self.n
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        check_len(self.n, theta.len())?;
        check_finite("parameters", theta)?;
        Ok(theta.iter().map(|t| (1.0 + t * t).sqrt() - 1.0).sum())
    }

    fn grad(&self, theta: &[f64]) -> Result<ParamVector> {
        check_len(self.n, theta.len())?;
        let mut g = vec![0.0; self.n];
        Self::grad_into(theta, &mut g);
        Ok(g.into())
    }

    fn hessian_diag(&self, theta: &[f64]) -> Result<ParamVector> {
        check_len(self.n, theta.len())?;
        Ok(theta
            .iter()
            .map(|t| (1.0 + t * t).powf(-1.5))
            .collect::<Vec<_>>()
            .into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub problem: SmoothProblemSpec,
    /// Adai in raw mode; `eta` is overwritten by `C/√(t_total+1)`.
    pub optimizer: OptimizerConfig,
    pub c: f64,
    pub t_total: u64,
    pub trials: usize,
    pub seed: u64,
    pub theta0: ParamVector,
    pub record_every: u64,
}

impl ConvergenceConfig {
    /// n = 10, σ = 0.1, C = 1, `L(θ₀) = 5`, 10⁴ steps, 20 trials.
    pub fn standard() -> Self {
        let problem = SmoothProblemSpec { n: 10, noise_std: 0.1 };
        ConvergenceConfig {
            problem,
            optimizer: OptimizerConfig::adai(1.0).raw(),
            c: 1.0,
            t_total: 10_000,
            trials: 20,
            seed: 0,
            theta0: problem.point_with_loss(5.0),
            record_every: 100,
        }
    }

    pub fn eta(&self) -> f64 {
        self.c / ((self.t_total + 1) as f64).sqrt()
    }

    pub fn effective_optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            eta: self.eta(),
            ..self.optimizer
        }
    }

    pub fn bound_inputs(&self) -> Result<ConvergenceBoundInputs> {
        Ok(ConvergenceBoundInputs {
            smoothness: self.problem.smoothness(),
            l0: self.problem.loss(&self.theta0)?,
            l_star: 0.0,
            grad_bound: self.problem.grad_bound(),
            delta_sq: self.problem.delta_sq(),
            c: self.c,
            beta1_max: self.optimizer.beta1_max(),
        })
    }

    fn validate(&self) -> Result<()> {
        if !self.optimizer.kind.is_adai() {
            return Err(Error::Mode(format!(
                "convergence check runs Adai, got {}",
                self.optimizer.kind
            )));
        }
        if self.optimizer.bias_correction {
            return Err(Error::Mode("convergence check runs without bias correction".into()));
        }
        if !(self.c > 0.0) || self.trials == 0 || self.record_every == 0 {
            return Err(Error::InvalidConfig(
                "C, trials and record_every must be positive".into(),
            ));
        }
        check_len(self.problem.n, self.theta0.len())?;
        self.effective_optimizer().validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRunReport {
    pub constants: ConvergenceBound,
    pub eta: f64,
    /// Checkpoints `t` (0 is the initial point).
    pub steps: Vec<u64>,
    /// `min_{k ≤ t}` of the trial-mean `‖∇L(θ_k)‖²`.
    pub min_grad_sq_mean: Vec<f64>,
    pub bound: Vec<f64>,
    pub violated: bool,
    /// First step (not only checkpoints) at which the bound failed.
    pub first_violation: Option<u64>,
    /// Trials whose own running minimum crossed the bound at some step.
    pub trial_violations: usize,
}

/// Runs `trials` noisy Adai trajectories and compares the running minimum
/// of the mean squared gradient norm with `(C₁+C₂+C₃)/√(t+1)` at every step.
pub fn run_convergence_check(config: &ConvergenceConfig) -> Result<ConvergenceRunReport> {
    config.validate()?;
    let opt = config.effective_optimizer();
    let n = config.problem.n;
    let steps = config.t_total as usize;
    let inputs = config.bound_inputs()?;
    let constants = convergence_bound(&inputs, 0)?;
    let total = constants.c1 + constants.c2 + constants.c3;
    let run = |trial: usize| -> Option<Vec<f64>> {
        let mut rng = labeled_stream(config.seed, "converge", trial as u64);
        let mut theta = config.theta0.0.clone();
        let mut state = init_state(&opt, n).ok()?;
        let (mut grad, mut g) = (vec![0.0; n], vec![0.0; n]);
        let mut norms = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            SmoothProblemSpec::grad_into(&theta, &mut grad);
            norms.push(grad.iter().map(|x| x * x).sum());
            if k == steps {
                break;
            }
            for i in 0..n {
                g[i] = grad[i] + config.problem.noise_std * rng.sample::<f64, _>(StandardNormal);
            }
            step_in_place(&opt, &mut state, &mut theta, &g).ok()?;
        }
        Some(norms)
    };
    let mut sums = vec![0.0; steps + 1];
    let mut ok = 0usize;
    let mut trial_violations = 0usize;
    let aborted = for_each_trial(config.trials, run, |v| {
        ok += 1;
        let mut low = f64::INFINITY;
        let mut hit = false;
        for (t, (s, x)) in sums.iter_mut().zip(v).enumerate() {
            *s += x;
            low = low.min(x);
            hit |= low > total / ((t + 1) as f64).sqrt();
        }
        trial_violations += hit as usize;
    });
    if aborted > 0 {
        return Err(Error::TooManyAborted {
            aborted,
            trials: config.trials,
        });
    }

    let mut running = f64::INFINITY;
    let mut report = ConvergenceRunReport {
        constants,
        eta: opt.eta,
        steps: Vec::new(),
        min_grad_sq_mean: Vec::new(),
        bound: Vec::new(),
        violated: trial_violations > 0,
        first_violation: None,
        trial_violations,
    };
    for (t, s) in sums.iter().enumerate() {
        running = running.min(s / ok as f64);
        let bound = total / ((t + 1) as f64).sqrt();
        if running > bound && report.first_violation.is_none() {
            report.violated = true;
            report.first_violation = Some(t as u64);
        }
        if (t as u64).is_multiple_of(config.record_every) || t == steps {
            report.steps.push(t as u64);
            report.min_grad_sq_mean.push(running);
            report.bound.push(bound);
        }
    }
    Ok(report)
}

#[derive(Serialize)]
struct Row {
    step: u64,
    min_grad_sq_mean: f64,
    bound: f64,
    margin: f64,
}

/// `convergence.csv`: step, min_grad_sq_mean, bound, margin (= bound - empirical).
pub fn write_convergence_csv(path: &Path, report: &ConvergenceRunReport) -> Result<()> {
    let rows: Vec<Row> = (0..report.steps.len())
        .map(|i| Row {
            step: report.steps[i],
            min_grad_sq_mean: report.min_grad_sq_mean[i],
            bound: report.bound[i],
            margin: report.bound[i] - report.min_grad_sq_mean[i],
        })
        .collect();
    crate::output::write_csv(path, &rows)
}

/// Traced noisy run of `steps` iterations, for the displacement identity.
pub fn traced_run(config: &ConvergenceConfig, steps: u64, trial: u64) -> Result<Trace> {
    let opt = OptimizerConfig {
        eta: config.eta(),
        ..config.optimizer
    };
    let mut o = Optimizer::new(opt, config.problem.n)?.with_trace();
    let mut rng = labeled_stream(config.seed, "lemma", trial);
    let mut theta = config.theta0.0.clone();
    let mut g = vec![0.0; config.problem.n];
    for _ in 0..steps {
        SmoothProblemSpec::grad_into(&theta, &mut g);
        for x in g.iter_mut() {
            *x += config.problem.noise_std * rng.sample::<f64, _>(StandardNormal);
        }
        o.step(&mut theta, &g)?;
    }
    Ok(o.trace.unwrap_or_default())
}

/// Largest residual `‖θ_{t+1} - θ_t + η Σ_k q_{k,t} g_k‖` over the trace.
pub fn verify_lemma1_identity(config: &OptimizerConfig, trace: &Trace) -> Result<Lemma1Report> {
    lemma1_check(config, trace)
}

/// Largest directional curvature seen at `probes` random points, from
/// central differences of the analytic gradient.
pub fn estimate_smoothness(problem: &SmoothProblemSpec, probes: usize, seed: u64) -> Result<f64> {
    let mut rng = labeled_stream(seed, "smoothness", 0);
    let n = problem.n;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let (mut up, mut down) = (vec![0.0; n], vec![0.0; n]);
    for p in 0..probes {
        let scale = if p % 2 == 0 { 0.1 } else { 3.0 };
        let x: Vec<f64> = (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let d: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let xp: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + h * b / norm).collect();
        let xm: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a - h * b / norm).collect();
        SmoothProblemSpec::grad_into(&xp, &mut up);
        SmoothProblemSpec::grad_into(&xm, &mut down);
        let diff = up.iter().zip(&down).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / (2.0 * h);
        worst = worst.max(diff);
    }
    Ok(worst)
}
