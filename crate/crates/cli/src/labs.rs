use std::path::Path;
use std::sync::Arc;

use adai_core::convergence_lab::{run_convergence_check, write_convergence_csv, ConvergenceConfig, SmoothProblemSpec};
use adai_core::escape_lab::{
    basin_selection_experiment, expected_sharpness, exponentiality_check, fractions, run_escape_experiment,
    write_escape_outputs, BasinNoise, BasinSelectionConfig, EscapeExperimentConfig, ScalingLaw, SharpnessProbeConfig,
};
use adai_core::noise_probe::{
    estimate_sgn_covariance, gaussianity_check, hessian_proportionality, near_minimum_point, write_scatter_csv,
    NoiseProbeReport,
};
use adai_core::optim::{OptimizerConfig, OptimizerKind, ParamVector};
use adai_core::output::write_json;
use adai_core::problems::{generate_dataset, Dataset, Objective, StyblinskiTang, TwoBasin};
use adai_core::saddle_lab::{
    adai_drift_check, adam_isotropy_check, msd_rows, predict, run_msd, write_msd_csv, SaddleExperimentConfig,
};
use adai_core::selftest::run_selftest;
use adai_core::Result;
use serde_json::json;

use crate::config::RunConfig;

/// Printed summary and whether the lab's checks held.
pub struct LabOutcome {
    pub passed: bool,
    pub lines: Vec<String>,
}

impl LabOutcome {
    fn new() -> Self {
        LabOutcome {
            passed: true,
            lines: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.lines.push(format!("[{}] {line}", if ok { "ok" } else { "FAIL" }));
    }

    fn info(&mut self, line: String) {
        self.lines.push(format!("      {line}"));
    }
}

fn expected_law(kind: OptimizerKind) -> Option<ScalingLaw> {
    match kind {
        OptimizerKind::Adam => Some(ScalingLaw::InvSqrtK),
        OptimizerKind::Sgd => None,
        _ => Some(ScalingLaw::InvK),
    }
}

pub fn escape(cfg: &RunConfig, out: &Path) -> Result<LabOutcome> {
    let s = &cfg.escape;
    let data = Arc::new(match &s.dataset {
        Some(p) => Dataset::load(p)?,
        None => generate_dataset(s.samples, s.dim, cfg.seed)?,
    });
    let mut o = LabOutcome::new();
    let mut runs = Vec::new();
    for &kind in &s.optimizers {
        let optimizer = match kind {
            OptimizerKind::Adai => OptimizerConfig::adai(s.adai_eta),
            OptimizerKind::AdaiW => OptimizerConfig::adaiw(s.adai_eta, 0.0),
            OptimizerKind::HeavyBall => OptimizerConfig::heavy_ball(s.heavy_ball_eta, 0.9, 1.0),
            OptimizerKind::Adam => OptimizerConfig::adam(s.adam_eta),
            OptimizerKind::Sgd => OptimizerConfig::sgd(s.sgd_eta),
        };
        let ec = EscapeExperimentConfig {
            optimizer,
            batch: s.batch,
            k_grid: s.k_grid.clone(),
            trials: s.trials,
            max_iter: s.max_iter,
            seed: cfg.seed,
            noise: s.noise,
        };
        let run = run_escape_experiment(&ec, &data)?;
        for c in &run.cells {
            let cv = exponentiality_check(&c.outcomes).map(|e| e.cv).ok();
            o.info(format!(
                "{:<10} k = {:<4} -log Γ = {:>8.3}  censored {:>3}  cv {}",
                run.optimizer,
                c.k,
                c.rate.neg_log_gamma(),
                c.rate.n_censored,
                cv.map_or("n/a".into(), |v| format!("{v:.2}"))
            ));
            if s.noise {
                o.check(
                    cv.is_some_and(|v| (0.7..=1.3).contains(&v)),
                    format!("{} k = {} exit-time cv in [0.7, 1.3]", run.optimizer, c.k),
                );
            }
        }
        match (run.fit, expected_law(kind)) {
            (Some(f), Some(want)) => o.check(
                f.winner == want,
                format!(
                    "{} prefers {:?} (R² 1/k {:.4}, 1/√k {:.4})",
                    run.optimizer, f.winner, f.inv_k.r_squared, f.inv_sqrt_k.r_squared
                ),
            ),
            (Some(f), None) => o.info(format!("{} prefers {:?}", run.optimizer, f.winner)),
            (None, _) => o.check(
                false,
                format!("{}: too few usable cells for a scaling fit", run.optimizer),
            ),
        }
        runs.push(run);
    }
    write_escape_outputs(out, &runs)?;
    Ok(o)
}

pub fn saddle(cfg: &RunConfig, out: &Path) -> Result<LabOutcome> {
    let s = &cfg.saddle;
    let optimizer = match s.optimizer {
        OptimizerKind::Sgd => OptimizerConfig::sgd(s.eta),
        OptimizerKind::HeavyBall => OptimizerConfig::heavy_ball(s.eta, s.beta1, s.beta3),
        OptimizerKind::Adam => OptimizerConfig::adam(s.eta),
        OptimizerKind::Adai => OptimizerConfig::adai(s.eta),
        OptimizerKind::AdaiW => OptimizerConfig::adaiw(s.eta, 0.0),
    };
    let sc = SaddleExperimentConfig {
        optimizer,
        h: s.h.clone(),
        batch: s.batch,
        t_max: s.t_max,
        record_every: s.record_every,
        trials: s.trials,
        seed: cfg.seed,
        burn_in: s.burn_in,
        noise: true,
    };
    let mut o = LabOutcome::new();
    let trace = run_msd(&sc)?;
    write_msd_csv(&out.join("saddle_msd.csv"), &msd_rows(&sc, &trace)?)?;
    match s.optimizer {
        OptimizerKind::Sgd | OptimizerKind::HeavyBall => {
            let min_iter = if s.optimizer == OptimizerKind::HeavyBall {
                250
            } else {
                0
            };
            let max_abs_h = s.h.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let mut worst: f64 = 0.0;
            for (r, &t) in trace.times.iter().enumerate() {
                if t < min_iter || max_abs_h * s.eta * t as f64 > 0.5 {
                    continue;
                }
                let (p, _) = predict(&sc, t)?;
                for (m, q) in trace.msd[r].iter().zip(&p) {
                    worst = worst.max((m - q).abs() / q.abs().max(1e-300));
                }
            }
            o.check(
                worst <= s.tolerance,
                format!(
                    "max relative MSD error {:.1}% (tolerance {:.0}%)",
                    100.0 * worst,
                    100.0 * s.tolerance
                ),
            );
        }
        OptimizerKind::Adam => {
            let r = adam_isotropy_check(&sc)?;
            o.check(
                (0.5..=2.0).contains(&r.ratio),
                format!("MSD ratio across |H| {:.3} (|H| ratio {:.0})", r.ratio, r.abs_h_ratio),
            );
        }
        OptimizerKind::Adai | OptimizerKind::AdaiW => {
            let r = adai_drift_check(&sc)?;
            let mean = r.drift_sq.iter().sum::<f64>() / r.drift_sq.len() as f64;
            let dev = (mean / r.predicted - 1.0).abs();
            o.check(
                dev <= 0.25,
                format!("drift² {mean:.3e} vs {:.3e} ({:.0}% off)", r.predicted, 100.0 * dev),
            );
            o.check(
                r.isotropy_ratio >= 0.5,
                format!("drift isotropy min/max {:.2}", r.isotropy_ratio),
            );
            write_json(&out.join("adai_drift.json"), &r)?;
        }
    }
    let last = trace.times.len() - 1;
    for (i, h) in s.h.iter().enumerate() {
        o.info(format!(
            "H = {h:>9.2e}  MSD at T = {}: {:.4e}",
            trace.times[last], trace.msd[last][i]
        ));
    }
    Ok(o)
}

pub fn noise(cfg: &RunConfig, out: &Path) -> Result<LabOutcome> {
    let s = &cfg.noise;
    let data = Arc::new(generate_dataset(s.samples, s.dim, cfg.seed)?);
    let st = StyblinskiTang::new(data, s.k)?;
    let theta = match &s.theta {
        Some(t) => ParamVector(t.clone()),
        None => near_minimum_point(&st, s.spread),
    };
    let est = estimate_sgn_covariance(&st, &theta, s.batch, s.draws, cfg.seed)?;
    let doubled = estimate_sgn_covariance(&st, &theta, 2 * s.batch, s.draws, cfg.seed.wrapping_add(1))?;
    let correlation = hessian_proportionality(&est).ok();
    let gaussianity = gaussianity_check(&st, &theta, s.gaussian_batch, s.gaussian_draws, cfg.seed)?;
    let report = NoiseProbeReport {
        estimate: est.summary(),
        doubled_batch_trace: doubled.trace(),
        trace_ratio: est.trace() / doubled.trace(),
        correlation,
        gaussianity,
    };
    write_json(&out.join("noise_report.json"), &report)?;
    write_scatter_csv(&out.join("noise_scatter.csv"), &est)?;

    let mut o = LabOutcome::new();
    if let Some(e) = report.estimate.identity_error {
        o.check(
            e < 0.05,
            format!("covariance vs (S - ḡḡᵀ)/B: {:.2}% Frobenius", 100.0 * e),
        );
    }
    o.check(
        (report.trace_ratio / 2.0 - 1.0).abs() < 0.10,
        format!("trace ratio B/2B {:.3}", report.trace_ratio),
    );
    match &report.correlation {
        Some(c) => o.info(format!(
            "rank correlation with |H| {:.2} CI [{:.2}, {:.2}]",
            c.spearman, c.spearman_ci.0, c.spearman_ci.1
        )),
        None => o.info("correlation undefined (flat diagonal)".into()),
    }
    let g = &report.gaussianity;
    match g.passed {
        Some(p) => o.check(
            p,
            format!(
                "median |excess kurtosis| {:.3} at B = {}",
                g.median_abs_kurtosis, g.batch
            ),
        ),
        None => o.info(format!(
            "median |excess kurtosis| {:.3} at B = {} (not gated)",
            g.median_abs_kurtosis, g.batch
        )),
    }
    Ok(o)
}

pub fn converge(cfg: &RunConfig, out: &Path) -> Result<LabOutcome> {
    let s = &cfg.converge;
    let problem = SmoothProblemSpec {
        n: s.n,
        noise_std: s.noise_std,
    };
    let cc = ConvergenceConfig {
        problem,
        optimizer: OptimizerConfig::adai(1.0).raw(),
        c: s.c,
        t_total: s.t_total,
        trials: s.trials,
        seed: cfg.seed,
        theta0: problem.point_with_loss(s.initial_loss),
        record_every: s.record_every,
    };
    let r = run_convergence_check(&cc)?;
    write_convergence_csv(&out.join("convergence.csv"), &r)?;
    write_json(&out.join("convergence.json"), &r)?;
    let mut o = LabOutcome::new();
    let last = r.steps.len() - 1;
    o.info(format!(
        "C1 {:.3e}  C2 {:.3e}  C3 {:.3e}  η {:.3e}",
        r.constants.c1, r.constants.c2, r.constants.c3, r.eta
    ));
    o.check(
        !r.violated,
        format!(
            "bound held over {} trials (violations {}); final min ‖∇L‖² {:.3e} vs {:.3e}",
            s.trials, r.trial_violations, r.min_grad_sq_mean[last], r.bound[last]
        ),
    );
    Ok(o)
}

pub fn sharpness(cfg: &RunConfig, out: &Path) -> Result<LabOutcome> {
    let s = &cfg.sharpness;
    let tb = TwoBasin::new(s.n, s.tilt)?;
    let mut o = LabOutcome::new();
    let mut probes = Vec::new();
    for (name, x) in [("flat", -1.0), ("sharp", 1.0)] {
        let theta = ParamVector::filled(s.n, x);
        let probe = SharpnessProbeConfig {
            sigma: s.sigma,
            samples: s.probe_samples,
            theta_star: theta.clone(),
            seed: cfg.seed,
        };
        let measured = expected_sharpness(&tb, &probe)?;
        let predicted = s.sigma * s.sigma / 2.0 * tb.hessian_diag(&theta)?.iter().sum::<f64>();
        let dev = (measured / predicted - 1.0).abs();
        o.check(
            dev < 0.10,
            format!("{name} minimum: sharpness {measured:.4e} vs (σ²/2)tr H {predicted:.4e}"),
        );
        probes.push(json!({ "minimum": name, "measured": measured, "predicted": predicted }));
    }
    let optimizers = [
        OptimizerConfig::adai(s.adai_eta),
        OptimizerConfig::adam(s.adam_eta),
        OptimizerConfig::heavy_ball(s.heavy_ball_eta, 0.9, 1.0),
    ];
    let bc = BasinSelectionConfig {
        trials: s.trials,
        iters: s.iters,
        init_range: s.init_range,
        noise: BasinNoise::Curvature { scale: s.noise_scale },
        seed: cfg.seed,
    };
    let rep = basin_selection_experiment(&tb, &optimizers, &bc)?;
    for oc in &rep.outcomes {
        o.info(format!(
            "{:<10} flat fraction {:.3} ({} of {})",
            oc.optimizer, oc.flat_fraction, oc.flat, oc.total
        ));
    }
    let a = rep.compare(0, 1);
    let h = rep.compare(2, 1);
    o.check(
        a.p_value < 0.05,
        format!("Adai flatter than Adam: p = {:.2e}", a.p_value),
    );
    o.check(
        h.p_value < 0.05,
        format!("heavy ball flatter than Adam: p = {:.2e}", h.p_value),
    );
    write_json(
        &out.join("sharpness.json"),
        &json!({
            "probes": probes,
            "barrier": rep.barrier,
            "outcomes": rep.outcomes,
            "flat_fractions": fractions(&rep),
            "adai_vs_adam": a,
            "heavy_ball_vs_adam": h,
        }),
    )?;
    Ok(o)
}

pub fn selftest() -> LabOutcome {
    let r = run_selftest();
    let mut o = LabOutcome::new();
    for c in &r.checks {
        o.check(c.passed, format!("{} {}", c.name, c.detail));
    }
    o
}
