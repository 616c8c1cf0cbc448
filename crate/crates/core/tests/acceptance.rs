//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance -- AC3 AC7` runs a subset. The process exits
//! 0 unless `ACCEPTANCE_STRICT=1` is set, so known failures stay visible in
//! the log without breaking the workspace test run.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use adai_core::convergence_lab::{
    run_convergence_check, traced_run, verify_lemma1_identity, write_convergence_csv, ConvergenceConfig,
    SmoothProblemSpec,
};
use adai_core::escape_lab::{
    basin_selection_experiment, estimate_escape_rate, expected_sharpness, exponentiality_check, run_escape_experiment,
    write_escape_outputs, BasinNoise, BasinSelectionConfig, EscapeExperimentConfig, ScalingLaw, SharpnessProbeConfig,
    TrialOutcome,
};
use adai_core::noise_probe::{estimate_sgn_covariance, hessian_proportionality, near_minimum_point};
use adai_core::optim::{init_state, step_in_place, Optimizer, OptimizerConfig, OptimizerKind, ParamVector};
use adai_core::output::write_json;
use adai_core::problems::{generate_dataset, Dataset, QuadraticSaddle, StyblinskiTang, TwoBasin};
use adai_core::rng::labeled_stream;
use adai_core::saddle_lab::{
    adai_drift_check, adam_isotropy_check, msd_rows, predict, run_msd, write_msd_csv, SaddleExperimentConfig,
};
use rand::Rng;

type Outcome = (bool, String);
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn ac1() -> Outcome {
    let mut worst_m: f64 = 0.0;
    let mut worst_v: f64 = 0.0;
    let g = [0.3, -2.0, 7.5, 1e-3];
    for cfg in [OptimizerConfig::adam(1e-3), OptimizerConfig::adai(1e-3)] {
        let mut s = init_state(&cfg, 4).unwrap();
        let mut th = vec![0.0; 4];
        for _ in 0..500 {
            step_in_place(&cfg, &mut s, &mut th, &g).unwrap();
            let (m, v) = (s.m_hat(&cfg), s.v_hat(&cfg));
            for i in 0..4 {
                worst_m = worst_m.max(rel(m[i], g[i]));
                if cfg.kind == OptimizerKind::Adam {
                    worst_v = worst_v.max(rel(v[i], g[i] * g[i]));
                }
            }
        }
    }

    let cfg = OptimizerConfig::adai(0.01);
    let mut s = init_state(&cfg, 8).unwrap();
    let mut th = vec![0.0; 8];
    let mut rng = labeled_stream(1, "ac1", 0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..20_000 {
        let g: Vec<f64> = (0..8)
            .map(|i| {
                let scale = 10f64.powi((i % 4) - 2);
                if t % 997 == 0 {
                    0.0
                } else {
                    scale * rng.random_range(-1.0..1.0)
                }
            })
            .collect();
        step_in_place(&cfg, &mut s, &mut th, &g).unwrap();
        for &b in s.last_beta1.iter() {
            lo = lo.min(b);
            hi = hi.max(b);
        }
    }
    let range_ok = lo >= 0.0 && hi <= 1.0 - cfg.epsilon;

    let adai = OptimizerConfig::adai(0.1).raw();
    let hb = OptimizerConfig::heavy_ball(0.1, 1.0 - adai.beta0, adai.beta0);
    let (mut sa, mut sh) = (init_state(&adai, 3).unwrap(), init_state(&hb, 3).unwrap());
    let (mut a, mut b) = (vec![1.0, -2.0, 0.5], vec![1.0, -2.0, 0.5]);
    let mut dev: f64 = 0.0;
    for t in 0..1000 {
        let c = 0.5 + (t as f64 * 0.37).sin().abs();
        let g = [c, if t % 3 == 0 { -c } else { c }, -c];
        step_in_place(&adai, &mut sa, &mut a, &g).unwrap();
        step_in_place(&hb, &mut sh, &mut b, &g).unwrap();
        for i in 0..3 {
            dev = dev.max((a[i] - b[i]).abs());
        }
    }
    let ok = worst_m < 1e-12 && worst_v < 1e-12 && range_ok && dev < 1e-10;
    (
        ok,
        format!(
            "max rel |m̂-g| {worst_m:.1e}, |v̂-g²| {worst_v:.1e}; β₁ ∈ [{lo:.4}, {hi:.4}]; uniform-v̂ vs heavy ball {dev:.1e}"
        ),
    )
}

fn ac2() -> Outcome {
    let cfg = ConvergenceConfig::standard();
    let mut worst: f64 = 0.0;
    let mut bounds = true;
    for trial in 0..5 {
        let tr = traced_run(&cfg, 1000, trial).unwrap();
        let r = verify_lemma1_identity(&cfg.effective_optimizer(), &tr).unwrap();
        worst = worst.max(r.max_residual);
        bounds &= r.holds(1e-9);
    }
    let mut o = Optimizer::new(OptimizerConfig::adai(0.05).raw(), 5)
        .unwrap()
        .with_trace();
    let mut th = vec![1.0, -1.0, 2.0, 0.1, -3.0];
    for t in 0..1000 {
        let g: Vec<f64> = th
            .iter()
            .enumerate()
            .map(|(i, x)| x * (i as f64 + 0.5) + (t as f64 * 0.1 + i as f64).cos())
            .collect();
        o.step(&mut th, &g).unwrap();
    }
    let r = verify_lemma1_identity(&o.config, o.trace.as_ref().unwrap()).unwrap();
    worst = worst.max(r.max_residual);
    bounds &= r.holds(1e-9);
    (
        bounds && worst < 1e-9,
        format!("max residual {worst:.2e} over 1000 steps, weight sums within bounds: {bounds}"),
    )
}

fn ac3() -> Outcome {
    let cfg = SaddleExperimentConfig {
        trials: 2000,
        record_every: 250,
        seed: 3,
        ..SaddleExperimentConfig::new(OptimizerConfig::sgd(0.1), vec![1e-3, -1e-3], 10, 25_000)
    };
    let tr = run_msd(&cfg).unwrap();
    let mut worst: f64 = 0.0;
    for (r, &t) in tr.times.iter().enumerate() {
        if 1e-3 * 0.1 * t as f64 > 0.5 {
            continue;
        }
        let (p, _) = predict(&cfg, t).unwrap();
        for (m, q) in tr.msd[r].iter().zip(&p) {
            worst = worst.max(rel(*m, *q));
        }
    }
    let sat = *tr.msd.last().unwrap().first().unwrap();
    let target = 0.1 / 20.0;
    let sat_err = rel(sat, target);
    (
        worst < 0.15 && sat_err < 0.15,
        format!(
            "max rel error {:.1}% on |H|ηT ≤ 0.5; saturation {sat:.3e} vs {target:.3e} ({:.1}%)",
            100.0 * worst,
            100.0 * sat_err
        ),
    )
}

fn ac4() -> Outcome {
    let cfg = SaddleExperimentConfig {
        trials: 2000,
        record_every: 250,
        seed: 4,
        ..SaddleExperimentConfig::new(OptimizerConfig::heavy_ball(0.1, 0.9, 0.1), vec![1e-3, -1e-3], 10, 5000)
    };
    let tr = run_msd(&cfg).unwrap();
    let mut worst: f64 = 0.0;
    for (r, &t) in tr.times.iter().enumerate() {
        let (p, _) = predict(&cfg, t).unwrap();
        for (m, q) in tr.msd[r].iter().zip(&p) {
            worst = worst.max(rel(*m, *q));
        }
    }
    let hb_ok = worst < 0.20;

    let dcfg = SaddleExperimentConfig {
        trials: 4000,
        burn_in: 5000,
        seed: 4,
        ..SaddleExperimentConfig::new(OptimizerConfig::adai(1e-3), vec![0.0198, -1.9802], 10, 1)
    };
    let d = adai_drift_check(&dcfg).unwrap();
    let total: f64 = d.drift_sq.iter().sum::<f64>() / d.drift_sq.len() as f64;
    let level = rel(total, d.predicted);
    let iso_ok = d.isotropy_ratio >= 0.5;
    (
        hb_ok && level < 0.25 && iso_ok,
        format!(
            "heavy ball max rel error {:.1}% (T = 250..5000); Adai drift² per direction {:?} vs {:.3e} ({:.0}% off), isotropy {:.2}",
            100.0 * worst,
            d.drift_sq.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>(),
            d.predicted,
            100.0 * level,
            d.isotropy_ratio
        ),
    )
}

fn ac5() -> Outcome {
    let h = vec![1e-3, -1e-1];
    let adam = SaddleExperimentConfig {
        trials: 1000,
        seed: 5,
        ..SaddleExperimentConfig::new(OptimizerConfig::adam(1e-3), h.clone(), 10, 200)
    };
    let sgd = SaddleExperimentConfig {
        trials: 1000,
        seed: 5,
        ..SaddleExperimentConfig::new(OptimizerConfig::sgd(0.01), h, 10, 200)
    };
    let a = adam_isotropy_check(&adam).unwrap();
    let s = adam_isotropy_check(&sgd).unwrap();
    let a_ok = (0.5..=2.0).contains(&a.ratio);
    let s_ok = (50.0..=200.0).contains(&s.ratio);
    (
        a_ok && s_ok,
        format!(
            "Adam ratio {:.3}, SGD ratio {:.1} (|H| ratio {:.0})",
            a.ratio, s.ratio, s.abs_h_ratio
        ),
    )
}

fn ac6() -> Outcome {
    let data = Arc::new(generate_dataset(50_000, 10, 6).unwrap());
    let mut ok = true;
    let mut parts = Vec::new();
    for (kind, want) in [
        (OptimizerKind::Adai, ScalingLaw::InvK),
        (OptimizerKind::HeavyBall, ScalingLaw::InvK),
        (OptimizerKind::Adam, ScalingLaw::InvSqrtK),
    ] {
        let cfg = EscapeExperimentConfig {
            seed: 6,
            ..EscapeExperimentConfig::defaults_for(kind)
        };
        let run = run_escape_experiment(&cfg, &data).unwrap();
        let mut cvs = Vec::new();
        for c in &run.cells {
            match exponentiality_check(&c.outcomes) {
                Ok(e) => {
                    ok &= e.cv_within(0.7, 1.3);
                    cvs.push(format!("{:.2}", e.cv));
                }
                Err(_) => {
                    ok = false;
                    cvs.push("n/a".into());
                }
            }
        }
        match run.fit {
            Some(f) => {
                ok &= f.winner == want;
                parts.push(format!(
                    "{}: R²(1/k) {:.4} R²(1/√k) {:.4} -> {:?}, cv [{}]",
                    run.optimizer,
                    f.inv_k.r_squared,
                    f.inv_sqrt_k.r_squared,
                    f.winner,
                    cvs.join(" ")
                ));
            }
            None => {
                ok = false;
                parts.push(format!("{}: no fit (censored)", run.optimizer));
            }
        }
    }
    (ok, parts.join("; "))
}

fn ac7() -> Outcome {
    let r = estimate_escape_rate(&[TrialOutcome::exited(50); 100], 1_000_000).unwrap();
    let exact = r.gamma == 98.0 / 5000.0
        && r.ci_low == r.gamma * (1.0 - 1.96 / 10.0)
        && r.ci_high == r.gamma * (1.0 + 1.96 / 10.0)
        && (r.ci_low - 0.015758).abs() < 5e-7
        && (r.ci_high - 0.023442).abs() < 5e-7;
    let mixed = [
        TrialOutcome::exited(10),
        TrialOutcome::censored(),
        TrialOutcome::exited(30),
        TrialOutcome::exited(60),
    ];
    let m = estimate_escape_rate(&mixed, 100).unwrap();
    let cens = m.gamma == 2.0 / 200.0 && m.n_censored == 1;
    (
        exact && cens,
        format!(
            "Γ = {} CI [{:.6}, {:.6}]; censored case Γ = {}",
            r.gamma, r.ci_low, r.ci_high, m.gamma
        ),
    )
}

fn ac8() -> Outcome {
    let data = Arc::new(generate_dataset(50_000, 10, 8).unwrap());
    let st = StyblinskiTang::new(data, 1.0).unwrap();
    let mut rng = labeled_stream(8, "ac8-theta", 0);
    let th: Vec<f64> = (0..10).map(|_| rng.random_range(-3.0..3.0)).collect();
    let e10 = estimate_sgn_covariance(&st, &th, 10, 100_000, 8).unwrap();
    let e20 = estimate_sgn_covariance(&st, &th, 20, 100_000, 9).unwrap();
    let err = e10.sampling_identity_error().unwrap();
    let ratio = e10.trace() / e20.trace();
    let near = near_minimum_point(&st, 0.5);
    let corr = estimate_sgn_covariance(&st, &near, 10, 100_000, 10)
        .and_then(|e| hessian_proportionality(&e))
        .map(|c| {
            format!(
                "rank corr {:.2} CI [{:.2}, {:.2}] (soft)",
                c.spearman, c.spearman_ci.0, c.spearman_ci.1
            )
        })
        .unwrap_or_else(|e| format!("correlation unavailable: {e}"));
    (
        err < 0.05 && (ratio / 2.0 - 1.0).abs() < 0.10,
        format!(
            "Frobenius rel error {:.2}%; trace ratio B=10/B=20 {ratio:.3}; {corr}",
            100.0 * err
        ),
    )
}

fn ac9() -> Outcome {
    let cfg = ConvergenceConfig::standard();
    let r = run_convergence_check(&cfg).unwrap();
    let last = r.steps.len() - 1;
    (
        !r.violated,
        format!(
            "{} trials x {} steps: violations {} (mean curve first at {:?}); final min ‖∇L‖² {:.3e} vs bound {:.3e}",
            cfg.trials, cfg.t_total, r.trial_violations, r.first_violation, r.min_grad_sq_mean[last], r.bound[last]
        ),
    )
}

fn basin_optimizers() -> Vec<OptimizerConfig> {
    vec![
        OptimizerConfig::adai(0.01),
        OptimizerConfig::adam(0.0476),
        OptimizerConfig::heavy_ball(0.001, 0.9, 1.0),
    ]
}

fn basin_config(trials: usize, iters: u64, seed: u64) -> BasinSelectionConfig {
    BasinSelectionConfig {
        trials,
        iters,
        init_range: 2.0,
        noise: BasinNoise::Curvature { scale: 3.0 },
        seed,
    }
}

fn ac10() -> Outcome {
    let mut worst: f64 = 0.0;
    let q = QuadraticSaddle::new(vec![0.5, 1.0, 2.0, 4.0], 1).unwrap();
    let pairs: [(Box<dyn adai_core::problems::Objective>, Vec<f64>, f64); 2] = [
        (Box::new(q), vec![0.0; 4], 7.5),
        (Box::new(SmoothProblemSpec { n: 6, noise_std: 0.0 }), vec![0.0; 6], 6.0),
    ];
    for (obj, theta, trace_h) in pairs.iter() {
        let sigma = 0.05;
        let probe = SharpnessProbeConfig {
            sigma,
            samples: 20_000,
            theta_star: ParamVector(theta.clone()),
            seed: 10,
        };
        let e = expected_sharpness(obj.as_ref(), &probe).unwrap();
        worst = worst.max(rel(e, sigma * sigma / 2.0 * trace_h));
    }
    let tb = TwoBasin::new(2, 0.9).unwrap();
    let rep = basin_selection_experiment(&tb, &basin_optimizers(), &basin_config(400, 20_000, 10)).unwrap();
    let adai_vs_adam = rep.compare(0, 1);
    let hb_vs_adam = rep.compare(2, 1);
    let f = |i: usize| rep.outcomes[i].flat_fraction;
    let ok = worst < 0.10 && adai_vs_adam.p_value < 0.05 && hb_vs_adam.p_value < 0.05;
    (
        ok,
        format!(
            "sharpness max rel error {:.1}%; flat fraction Adai {:.3}, Adam {:.3}, heavy ball {:.3}; p(Adai>Adam) {:.1e}, p(HB>Adam) {:.1e}",
            100.0 * worst,
            f(0),
            f(1),
            f(2),
            adai_vs_adam.p_value,
            hb_vs_adam.p_value
        ),
    )
}

fn run_all_labs(dir: &Path) {
    let saddle = SaddleExperimentConfig {
        trials: 300,
        record_every: 50,
        seed: 11,
        ..SaddleExperimentConfig::new(OptimizerConfig::adai(0.01), vec![1e-2, -1e-1, 1.0], 10, 500)
    };
    let tr = run_msd(&saddle).unwrap();
    write_msd_csv(&dir.join("saddle_msd.csv"), &msd_rows(&saddle, &tr).unwrap()).unwrap();

    let data = Arc::new(Dataset::generate(2000, 5, 11, 2.0).unwrap());
    let esc = EscapeExperimentConfig {
        trials: 40,
        max_iter: 100_000,
        seed: 11,
        ..EscapeExperimentConfig::defaults_for(OptimizerKind::Adam)
    };
    let run = run_escape_experiment(&esc, &data).unwrap();
    write_escape_outputs(dir, &[run]).unwrap();

    let conv = ConvergenceConfig {
        t_total: 2000,
        trials: 8,
        seed: 11,
        ..ConvergenceConfig::standard()
    };
    write_convergence_csv(&dir.join("convergence.csv"), &run_convergence_check(&conv).unwrap()).unwrap();

    let st = StyblinskiTang::new(data, 1.0).unwrap();
    let e = estimate_sgn_covariance(&st, &[0.1, -0.5, 1.0, -2.0, 0.3], 10, 5000, 11).unwrap();
    write_json(&dir.join("noise.json"), &e.summary()).unwrap();

    let tb = TwoBasin::new(2, 0.9).unwrap();
    let rep = basin_selection_experiment(&tb, &basin_optimizers(), &basin_config(40, 2000, 11)).unwrap();
    write_json(&dir.join("selection.json"), &rep).unwrap();
}

fn ac11() -> Outcome {
    let base = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for threads in [1usize, 3, 8] {
        let d = base.path().join(format!("t{threads}"));
        std::fs::create_dir_all(&d).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_all_labs(&d));
        dirs.push(d);
    }
    let mut names: Vec<String> = std::fs::read_dir(&dirs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut diffs = Vec::new();
    for name in &names {
        let first = std::fs::read(dirs[0].join(name)).unwrap();
        for d in &dirs[1..] {
            if std::fs::read(d.join(name)).ok().as_deref() != Some(first.as_slice()) {
                diffs.push(name.clone());
            }
        }
    }
    (
        diffs.is_empty(),
        format!(
            "{} files compared across 1, 3 and 8 workers; differing: {:?}",
            names.len(),
            diffs
        ),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("AC1", "optimizer exactness", ac1),
        ("AC2", "displacement identity", ac2),
        ("AC3", "SGD saddle MSD", ac3),
        ("AC4", "heavy ball MSD and Adai drift", ac4),
        ("AC5", "Adam isotropy", ac5),
        ("AC6", "escape-rate scaling", ac6),
        ("AC7", "escape-rate estimator", ac7),
        ("AC8", "noise covariance identity", ac8),
        ("AC9", "convergence bound", ac9),
        ("AC10", "sharpness and basin selection", ac10),
        ("AC11", "determinism across workers", ac11),
    ];
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with("AC")).collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == id) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = f();
        failed += usize::from(!ok);
        println!(
            "{id} {} {name}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failed} criteria failed");
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
