use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adai-lab"))
        .args(args)
        .env_remove("ADAI_LAB_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL_ESCAPE: &str = r#"
[escape]
optimizers = ["adam"]
trials = 30
max_iter = 200000
samples = 2000
dim = 5
"#;

#[test]
fn selftest_passes() {
    let o = lab(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(lab(&["escape", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(lab(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(lab(&[]).status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "seed = 1\n\n[converge]\nsteps = 10\n");
    let out = dir.path().join("out");
    let o = lab(&["converge", "--config", &cfg, "--output-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));
    assert!(!out.exists());
}

#[test]
fn duplicate_key_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "seed = 1\nseed = 2\n");
    assert_eq!(lab(&["selftest", "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn same_seed_gives_identical_files_for_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_ESCAPE);
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "2", "1"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let o = lab(&[
            "escape",
            "--config",
            &cfg,
            "--seed",
            "7",
            "--threads",
            threads,
            "--output-dir",
            out.to_str().unwrap(),
        ]);
        assert!(
            matches!(o.status.code(), Some(0) | Some(2)),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        outputs.push(out);
    }
    for name in ["escape_trials.csv", "escape_rates.csv", "scaling_fits.json"] {
        let a = std::fs::read(outputs[0].join(name)).unwrap();
        for other in &outputs[1..] {
            assert_eq!(a, std::fs::read(other.join(name)).unwrap(), "{name}");
        }
    }
    let csv = std::fs::read_to_string(outputs[0].join("escape_trials.csv")).unwrap();
    assert!(csv.starts_with("optimizer,k,trial,exit_iter,censored\n"));
    assert!(!csv.contains('\r'));
}

#[test]
fn config_is_echoed_and_reloadable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "seed = 3\n[converge]\nt_total = 500\ntrials = 4\n",
    );
    let out = dir.path().join("out");
    let o = lab(&["converge", "--config", &cfg, "--output-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let echoed = out.join("config.toml");
    let text = std::fs::read_to_string(&echoed).unwrap();
    assert!(text.contains("t_total = 500"));
    let out2 = dir.path().join("out2");
    let o = lab(&[
        "converge",
        "--config",
        echoed.to_str().unwrap(),
        "--output-dir",
        out2.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        std::fs::read(out.join("convergence.csv")).unwrap(),
        std::fs::read(out2.join("convergence.csv")).unwrap()
    );
    let csv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("step,min_grad_sq_mean,bound,margin\n"));
}

#[test]
fn failed_check_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "[saddle]\ntrials = 50\nt_max = 500\nrecord_every = 100\ntolerance = 0.0\n",
    );
    let out = dir.path().join("out");
    let o = lab(&["saddle", "--config", &cfg, "--output-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(out.join("saddle_msd.csv").exists());
}

#[test]
fn defaults_conflicts_with_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "");
    assert_eq!(
        lab(&["selftest", "--defaults", "--config", &cfg]).status.code(),
        Some(1)
    );
}
