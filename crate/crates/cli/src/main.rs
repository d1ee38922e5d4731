//! Experiment harness CLI: load a flat key-value config, apply overrides,
//! run the named experiment and write CSV/JSON outputs.
//!
//! Exit codes: 0 success, 1 config error, 2 runtime error.

use clap::Parser;
use sparse_field::experiments::{run, ExperimentConfig, RawConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "sparse-field",
    about = "Simulate and fit scalable Gaussian random fields",
    version
)]
struct Args {
    /// Path to the experiment config file.
    #[arg(long)]
    config: PathBuf,

    /// Override the config's experiment tag (bb, field, mle, mpcgp-compare,
    /// theorem-probe).
    #[arg(long)]
    experiment: Option<String>,

    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads (0 = automatic; SPARSE_FIELD_THREADS is the fallback).
    #[arg(long)]
    threads: Option<usize>,

    /// Uniformly scale replications and cap grid sizes, e.g. 0.1 for a quick
    /// smoke run.
    #[arg(long)]
    scale: Option<f64>,
}

fn load_config(args: &Args) -> Result<ExperimentConfig, sparse_field::Error> {
    let mut raw = RawConfig::load(&args.config)?;
    if let Some(tag) = &args.experiment {
        raw.set("experiment.tag", tag.clone());
    }
    if let Some(seed) = args.seed {
        raw.set("experiment.seed", seed.to_string());
    }
    if let Some(out) = &args.out {
        raw.set("experiment.out", out.display().to_string());
    }
    if let Some(threads) = args.threads {
        raw.set("experiment.threads", threads.to_string());
    }
    let mut cfg = ExperimentConfig::from_raw(&raw)?;
    if let Some(scale) = args.scale {
        cfg.apply_scale(scale)?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match load_config(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(&cfg) {
        Ok(output) => {
            for f in &output.files {
                println!("wrote {}", f.display());
            }
            println!("wrote {}", output.manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("runtime error: {e}");
            ExitCode::from(2)
        }
    }
}
