mod config;
mod labs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{load_config, write_config, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "adai-lab",
    version,
    about = "Diffusion and escape experiments for adaptive-inertia optimizers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true, conflicts_with = "defaults")]
    config: Option<PathBuf>,

    /// Use the built-in defaults for every parameter.
    #[arg(long, global = true)]
    defaults: bool,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "ADAI_LAB_THREADS")]
    threads: Option<usize>,

    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Escape rates on the rescaled Styblinski–Tang valley and scaling fits.
    Escape,
    /// Mean squared displacement on a quadratic saddle.
    Saddle,
    /// Minibatch gradient-noise covariance and Gaussianity.
    Noise,
    /// Adai convergence bound on the pseudo-Huber problem.
    Converge,
    /// Expected sharpness and two-basin minima selection.
    Sharpness,
    /// Quick checks of worked examples.
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Escape => "escape",
            Command::Saddle => "saddle",
            Command::Noise => "noise",
            Command::Converge => "converge",
            Command::Sharpness => "sharpness",
            Command::Selftest => "selftest",
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p).map_err(|e| e.to_string())?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(d) = &cli.output_dir {
        cfg.output_dir = d.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &RunConfig) -> adai_core::Result<labs::LabOutcome> {
    let out = &cfg.output_dir;
    if cli.command != Command::Selftest {
        std::fs::create_dir_all(out)?;
        adai_core::output::write_atomic(&out.join("config.toml"), write_config(cfg).as_bytes())?;
    }
    match cli.command {
        Command::Escape => labs::escape(cfg, out),
        Command::Saddle => labs::saddle(cfg, out),
        Command::Noise => labs::noise(cfg, out),
        Command::Converge => labs::converge(cfg, out),
        Command::Sharpness => labs::sharpness(cfg, out),
        Command::Selftest => Ok(labs::selftest()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if cfg.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli, &cfg) {
        Ok(o) => {
            println!("{} (seed {})", cli.command.name(), cfg.seed);
            for l in &o.lines {
                println!("{l}");
            }
            if cli.command != Command::Selftest {
                println!("outputs in {}", cfg.output_dir.display());
            }
            if o.passed {
                ExitCode::SUCCESS
            } else {
                println!("some checks failed");
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
