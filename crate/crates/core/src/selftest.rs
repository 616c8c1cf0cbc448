//! Quick checks of worked examples across the crate, for a build sanity run.

use std::sync::Arc;

use serde::Serialize;

use crate::convergence_lab::{
    estimate_smoothness, traced_run, verify_lemma1_identity, ConvergenceConfig, SmoothProblemSpec,
};
use crate::error::Result;
use crate::escape_lab::{estimate_escape_rate, exponentiality_of, TrialOutcome};
use crate::noise_probe::{abs_eigen_diag, estimate_sgn_covariance};
use crate::optim::{displacement_weights, init_state, step_in_place, OptimizerConfig};
use crate::problems::{critical_points, fd_grad, Dataset, Objective, Sampling, StyblinskiTang, TwoBasin};
use crate::rng::labeled_stream;
use crate::theory::{drift_adai, effective_diffusion_ratio, msd_sgd, SaddleSpectrum};

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1e-300)
}

fn one_step(cfg: &OptimizerConfig, theta: &[f64], g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut s = init_state(cfg, theta.len())?;
    let mut th = theta.to_vec();
    step_in_place(cfg, &mut s, &mut th, g)?;
    Ok((th, s.last_beta1.0))
}

fn checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut push = |name, passed, detail: String| out.push(Check { name, passed, detail });

    let (th, _) = one_step(&OptimizerConfig::sgd(0.1), &[1.0], &[2.0])?;
    push("sgd step", close(th[0], 0.8, 1e-12), format!("{}", th[0]));

    let hb = OptimizerConfig::heavy_ball(0.1, 0.9, 1.0);
    let mut s = init_state(&hb, 1)?;
    let mut th = vec![0.0];
    for _ in 0..400 {
        step_in_place(&hb, &mut s, &mut th, &[1.0])?;
    }
    push(
        "heavy ball terminal step",
        close(s.last_update[0], -1.0, 1e-10),
        format!("{}", s.last_update[0]),
    );

    let (th, _) = one_step(&OptimizerConfig::adam(0.001), &[0.0], &[2.0])?;
    push("adam first step", close(th[0], -0.001, 1e-7), format!("{}", th[0]));

    let (_, b1) = one_step(&OptimizerConfig::adai(0.1), &[0.0, 0.0], &[3.0, 1.0])?;
    push(
        "adai inertia",
        close(b1[0], 0.82, 1e-12) && close(b1[1], 0.98, 1e-12),
        format!("{b1:?}"),
    );

    let (_, b1) = one_step(&OptimizerConfig::adai(0.1), &[0.0, 0.0], &[10.0, 0.1])?;
    push("adai clamp", b1[1] == 0.999, format!("{b1:?}"));

    let (th, b1) = one_step(&OptimizerConfig::adai(0.1), &[1.0, 2.0], &[0.0, 0.0])?;
    push(
        "adai zero gradient",
        th == [1.0, 2.0] && b1.iter().all(|b| close(*b, 0.9, 1e-15)),
        format!("{b1:?}"),
    );

    let (th, _) = one_step(&OptimizerConfig::adaiw(0.1, 0.01), &[1.0], &[0.0])?;
    push("adaiw decay", close(th[0], 0.999, 1e-14), format!("{}", th[0]));

    let h = [0.9; 3];
    let q: f64 = (0..3).map(|k| displacement_weights(&h, k, 2)).sum::<Result<f64>>()?;
    push("displacement weights", close(q, 0.271, 1e-12), format!("{q}"));

    let cfg = ConvergenceConfig::standard();
    let tr = traced_run(&cfg, 1000, 0)?;
    let rep = verify_lemma1_identity(&cfg.effective_optimizer(), &tr)?;
    push(
        "displacement identity",
        rep.holds(1e-9),
        format!("residual {:.3e}", rep.max_residual),
    );

    let smooth = estimate_smoothness(&SmoothProblemSpec { n: 10, noise_std: 0.1 }, 1000, 0)?;
    push("pseudo-huber smoothness", smooth <= 1.0 + 1e-6, format!("{smooth}"));

    let est = estimate_escape_rate(&vec![TrialOutcome::exited(50); 100], 1_000_000)?;
    push(
        "escape rate estimator",
        close(est.gamma, 0.0196, 1e-12)
            && (est.ci_low - 0.015758).abs() < 5e-7
            && (est.ci_high - 0.023442).abs() < 5e-7,
        format!("{} [{}, {}]", est.gamma, est.ci_low, est.ci_high),
    );

    let mut rng = labeled_stream(0, "selftest-exp", 0);
    let t: Vec<f64> = (0..2000)
        .map(|_| rand_distr::Distribution::sample(&rand_distr::Exp1, &mut rng))
        .collect();
    let e = exponentiality_of(&t)?;
    push("exponential cv", e.cv_within(0.9, 1.1), format!("{}", e.cv));

    let cp = critical_points();
    push(
        "styblinski-tang critical points",
        (cp.a + 2.903534).abs() < 1e-6 && (cp.b - 0.156731).abs() < 1e-6,
        format!("{} {}", cp.a, cp.b),
    );

    let data = Arc::new(Dataset::generate(500, 4, 1, 2.0)?);
    let st = StyblinskiTang::new(data, 2.0)?;
    let th = [0.3, -1.0, 1.5, -2.0];
    let g = st.grad(&th)?;
    let f = fd_grad(&st, &th, 1e-6)?;
    let err = g.iter().zip(f.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    push("styblinski-tang gradient", err < 1e-6, format!("{err:.3e}"));

    let full = st.clone().with_sampling(Sampling::WithoutReplacement);
    let e = estimate_sgn_covariance(&full, &th, 500, 1000, 0)?;
    let norm = e.c_hat.as_ref().map_or(f64::NAN, |c| c.norm());
    push("full-batch noise", norm < 1e-12, format!("{norm:.3e}"));

    let a = abs_eigen_diag(&[1.0, -2.0, 0.0]);
    push("abs eigen diag", a.0 == [1.0, 2.0, 0.0], format!("{:?}", a.0));

    let spec = SaddleSpectrum::new(vec![1e-3], 0.1, 10)?;
    let sat = msd_sgd(&spec, 1e7).total[0];
    push("sgd saturation", close(sat, 0.1 / 20.0, 1e-12), format!("{sat}"));

    let dr = drift_adai(&[1e-3, 1e-1], 0.001, 0.1, 10);
    push("adai drift level", dr.is_finite() && dr > 0.0, format!("{dr:.3e}"));

    push(
        "effective diffusion domain",
        effective_diffusion_ratio(2.0, 1.0, 1.0).is_err()
            && close(effective_diffusion_ratio(0.0, 1.0, 1.0)?, 1.0, 1e-15),
        String::new(),
    );

    let tb = TwoBasin::new(1, 0.9)?;
    let r = tb.curvature_ratio();
    push("two-basin curvature ratio", r > 1.0, format!("{r}"));

    Ok(out)
}

/// Runs every check; an error inside a check is reported as a failure.
pub fn run_selftest() -> SelftestReport {
    match checks() {
        Ok(checks) => SelftestReport { checks },
        Err(e) => SelftestReport {
            checks: vec![Check {
                name: "selftest",
                passed: false,
                detail: e.to_string(),
            }],
        },
    }
}
