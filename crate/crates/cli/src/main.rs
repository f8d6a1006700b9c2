//! `lorentz` — Lorentz process laboratory front end.
//!
//! `lorentz run` executes one scenario from a TOML configuration and writes
//! a manifest plus JSON/CSV artifacts; `lorentz replay` re-runs a manifest
//! and verifies every artifact byte for byte. Runs with equal seed are
//! byte-identical regardless of worker count.

mod config;
mod manifest;
mod replay;
mod report;
mod scenarios;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use manifest::Manifest;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "lorentz", version, about = "Planar Lorentz process laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario from a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for artifacts and the manifest.
        #[arg(long)]
        out: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0 = all cores). Results do not depend on it.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Override the last ensemble/oracle schedule entry.
        #[arg(long)]
        n: Option<u64>,
        /// Override the ensemble trajectory count.
        #[arg(long)]
        trajectories: Option<u64>,
        /// Override the oracle target point (repeatable per coordinate).
        #[arg(long, num_args = 1.., allow_negative_numbers = true)]
        k: Option<Vec<i64>>,
    },
    /// Re-run a recorded manifest and compare artifacts byte for byte.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
}

fn init_workers(workers: usize) {
    if workers > 0 {
        // ignore failure when a pool already exists (tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, out, seed, workers, n, trajectories, k } => {
            init_workers(workers);
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("cannot read config {}", config.display()))?;
            let mut cfg = ExperimentConfig::parse(&text)?;
            apply_overrides(&mut cfg, seed, n, trajectories, k);
            execute(&cfg, &out)
        }
        Command::Replay { manifest, workers } => {
            init_workers(workers);
            replay::replay(&manifest)
        }
    }
}

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    seed: Option<u64>,
    n: Option<u64>,
    trajectories: Option<u64>,
    k: Option<Vec<i64>>,
) {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = n {
        if let Some(last) = cfg.ensemble.n_schedule.last_mut() {
            *last = n;
        }
        cfg.ensemble.n_schedule.retain(|&x| x <= n);
        if cfg.ensemble.n_schedule.is_empty() {
            cfg.ensemble.n_schedule.push(n);
        }
        if let Some(last) = cfg.oracle.n_schedule.last_mut() {
            *last = n;
        }
    }
    if let Some(t) = trajectories {
        cfg.ensemble.trajectories = t;
    }
    if let Some(k) = k {
        cfg.oracle.k = k;
    }
}

/// Runs the scenario, writes artifacts plus the manifest, prints the summary
/// and returns whether all scenario checks passed.
pub fn execute(cfg: &ExperimentConfig, out: &std::path::Path) -> Result<bool> {
    std::fs::create_dir_all(out)?;
    // the resolved configuration (defaults applied) is itself an artifact
    let resolved_text = toml::to_string_pretty(cfg)?;
    std::fs::write(out.join("config.toml"), &resolved_text)?;

    let result = scenarios::run_scenario(cfg, out)?;

    let mut artifact_names = vec!["config.toml".to_string()];
    artifact_names.extend(result.artifacts.iter().cloned());
    let checks_json = serde_json::to_value(&result.checks)?;
    std::fs::write(
        out.join("checks.json"),
        format!("{}\n", serde_json::to_string_pretty(&checks_json)?),
    )?;
    artifact_names.push("checks.json".to_string());

    let resolved = serde_json::to_value(cfg)?;
    let manifest = Manifest::collect(
        cfg.scenario.name(),
        cfg.seed,
        &resolved_text,
        resolved,
        out,
        &artifact_names,
    )?;
    manifest.write(out)?;

    print!("{}", result.summary);
    for c in &result.checks {
        let op = if c.upper_bound { "<" } else { ">" };
        println!(
            "[{}] {} = {:.6e} {} {:.6e}",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            c.value,
            op,
            c.threshold
        );
    }
    Ok(result.passed())
}
