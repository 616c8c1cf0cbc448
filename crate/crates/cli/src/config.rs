//! TOML run configuration.
//!
//! Top-level keys: `seed`, `threads`, `output_dir`. One optional table per
//! lab (`[escape]`, `[saddle]`, `[noise]`, `[converge]`, `[sharpness]`).
//! Every key is optional; unknown keys and duplicate keys are errors.

use std::path::{Path, PathBuf};

use adai_core::escape_lab::DEFAULT_K_GRID;
use adai_core::OptimizerKind;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// 0 means the rayon default.
    pub threads: usize,
    pub output_dir: PathBuf,
    pub escape: EscapeSection,
    pub saddle: SaddleSection,
    pub noise: NoiseSection,
    pub converge: ConvergeSection,
    pub sharpness: SharpnessSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 0,
            output_dir: PathBuf::from("results"),
            escape: EscapeSection::default(),
            saddle: SaddleSection::default(),
            noise: NoiseSection::default(),
            converge: ConvergeSection::default(),
            sharpness: SharpnessSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscapeSection {
    pub optimizers: Vec<OptimizerKind>,
    pub k_grid: Vec<f64>,
    pub trials: usize,
    pub max_iter: u64,
    pub batch: usize,
    pub samples: usize,
    pub dim: usize,
    pub noise: bool,
    /// Binary dataset to load instead of generating one from `seed`.
    pub dataset: Option<PathBuf>,
    pub adai_eta: f64,
    pub heavy_ball_eta: f64,
    pub adam_eta: f64,
    pub sgd_eta: f64,
}

impl Default for EscapeSection {
    fn default() -> Self {
        EscapeSection {
            optimizers: vec![OptimizerKind::Adai, OptimizerKind::HeavyBall, OptimizerKind::Adam],
            k_grid: DEFAULT_K_GRID.to_vec(),
            trials: 100,
            max_iter: 10_000_000,
            batch: 10,
            samples: 50_000,
            dim: 10,
            noise: true,
            dataset: None,
            adai_eta: 1e-3,
            heavy_ball_eta: 1e-4,
            adam_eta: 0.03,
            sgd_eta: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaddleSection {
    pub optimizer: OptimizerKind,
    pub eta: f64,
    /// Heavy ball only.
    pub beta1: f64,
    pub beta3: f64,
    pub h: Vec<f64>,
    pub batch: usize,
    pub t_max: u64,
    pub record_every: u64,
    pub trials: usize,
    /// Relative MSD tolerance for the exit status.
    pub tolerance: f64,
    /// Burn-in for the Adai drift check.
    pub burn_in: u64,
}

impl Default for SaddleSection {
    fn default() -> Self {
        SaddleSection {
            optimizer: OptimizerKind::Sgd,
            eta: 0.1,
            beta1: 0.9,
            beta3: 0.1,
            h: vec![1e-3, -1e-3],
            batch: 10,
            t_max: 5000,
            record_every: 250,
            trials: 2000,
            tolerance: 0.15,
            burn_in: 5000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub samples: usize,
    pub dim: usize,
    pub k: f64,
    pub batch: usize,
    pub draws: usize,
    /// Probe point; defaults to a point near the shifted minimum.
    pub theta: Option<Vec<f64>>,
    pub spread: f64,
    pub gaussian_batch: usize,
    pub gaussian_draws: usize,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            samples: 50_000,
            dim: 10,
            k: 1.0,
            batch: 10,
            draws: 100_000,
            theta: None,
            spread: 0.5,
            gaussian_batch: 64,
            gaussian_draws: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeSection {
    pub n: usize,
    pub noise_std: f64,
    pub c: f64,
    pub t_total: u64,
    pub trials: usize,
    pub initial_loss: f64,
    pub record_every: u64,
}

impl Default for ConvergeSection {
    fn default() -> Self {
        ConvergeSection {
            n: 10,
            noise_std: 0.1,
            c: 1.0,
            t_total: 10_000,
            trials: 20,
            initial_loss: 5.0,
            record_every: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SharpnessSection {
    pub sigma: f64,
    pub probe_samples: usize,
    pub n: usize,
    pub tilt: f64,
    pub trials: usize,
    pub iters: u64,
    pub init_range: f64,
    pub noise_scale: f64,
    pub adai_eta: f64,
    pub adam_eta: f64,
    pub heavy_ball_eta: f64,
}

impl Default for SharpnessSection {
    fn default() -> Self {
        SharpnessSection {
            sigma: 0.05,
            probe_samples: 20_000,
            n: 2,
            tilt: 0.9,
            trials: 400,
            iters: 20_000,
            init_range: 2.0,
            noise_scale: 3.0,
            adai_eta: 0.01,
            adam_eta: 0.0476,
            heavy_ball_eta: 0.001,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub fn parse_config(text: &str, path: &Path) -> Result<RunConfig, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
        let message = match line {
            Some(l) => format!("line {l}: {}", e.message()),
            None => e.message().to_string(),
        };
        ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        }
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path)
}

pub fn write_config(config: &RunConfig) -> String {
    toml::to_string_pretty(config).expect("run config always serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfig, ConfigError> {
        parse_config(s, Path::new("test.toml"))
    }

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn missing_keys_take_defaults() {
        let c = parse("seed = 7\n[escape]\ntrials = 5\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.escape.trials, 5);
        assert_eq!(c.escape.max_iter, 10_000_000);
        assert_eq!(c.saddle, SaddleSection::default());
    }

    #[test]
    fn unknown_and_duplicate_keys_fail_with_line() {
        let e = parse("seed = 1\n[escape]\ntrails = 5\n").unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        let e = parse("seed = 1\nseed = 2\n").unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        assert!(parse("[bogus]\n").is_err());
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig {
            seed: 42,
            ..RunConfig::default()
        };
        c.escape.optimizers = vec![OptimizerKind::Adam];
        c.noise.theta = Some(vec![0.5, -1.0]);
        c.escape.dataset = Some(PathBuf::from("data.bin"));
        let text = write_config(&c);
        assert_eq!(parse(&text).unwrap(), c);
    }
}
