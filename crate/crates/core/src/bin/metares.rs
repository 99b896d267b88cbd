use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use metares::experiment::{
    run_complexity_sweep, run_metrics, run_pipeline, run_selection, run_simulate, run_task_atlas,
    verify_bundle, ExperimentConfig, Manifest, SEED_ENV,
};

/// Mechanical-metamaterial reservoir computing experiments.
#[derive(Parser)]
#[command(name = "metares", version)]
struct Cli {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed. Precedence: this flag, then $METARES_SEED, then the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the lattice and export state, input and force.
    Simulate,
    /// Simulate, train a readout per task, and export scores and overlays.
    Run,
    /// Score tasks against input complexity for both lattice variants.
    Sweep,
    /// Greedy sensor selection against random subsets.
    Select,
    /// Nonlinearity and memory of sensors and tasks on shared axes.
    Atlas,
    /// Per-sensor metrics, frequency content, PCA and correlations.
    Metrics,
    /// Re-hash an output bundle against its manifest.
    Verify {
        /// Bundle directory; falls back to --out.
        dir: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    } else if let Ok(value) = std::env::var(SEED_ENV) {
        config.seed = value
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={value:?} is not an unsigned integer"))?;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn report(manifest: &Manifest, out: &std::path::Path) {
    println!(
        "{}: wrote {} files to {} (config {}, seed {})",
        manifest.command,
        manifest.files.len(),
        out.display(),
        manifest.config_fingerprint,
        manifest.seed
    );
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    if let Command::Verify { dir } = &cli.command {
        let dir = dir
            .clone()
            .or_else(|| cli.out.clone())
            .context("verify needs a bundle directory")?;
        let manifest = verify_bundle(&dir)?;
        println!(
            "verify: {} files match {}",
            manifest.files.len(),
            dir.display()
        );
        return Ok(());
    }
    let config = load_config(&cli)?;
    let out = config.output_dir.clone();
    match cli.command {
        Command::Simulate => report(&run_simulate(&config, &out)?, &out),
        Command::Run => {
            let (manifest, scores) = run_pipeline(&config, &out)?;
            for s in &scores {
                println!(
                    "{:<16} r2_train {:>9.5} r2_test {:>9.5}",
                    s.task, s.r2_train, s.r2_test
                );
            }
            report(&manifest, &out);
        }
        Command::Sweep => {
            let (manifest, rows) = run_complexity_sweep(&config, &out)?;
            for r in &rows {
                println!(
                    "k={} {:<10} {:<16} r2_test {:>9.5}",
                    r.k,
                    r.variant.name(),
                    r.task,
                    r.r2_test
                );
            }
            report(&manifest, &out);
        }
        Command::Select => {
            let (manifest, sel) = run_selection(&config, &out)?;
            println!(
                "best size {} of {}: r2_test {:.5} (all sensors {:.5})",
                sel.best_size,
                sel.result.order.len(),
                sel.r2_best,
                sel.r2_full
            );
            report(&manifest, &out);
        }
        Command::Atlas => {
            let (manifest, atlas) = run_task_atlas(&config, &out)?;
            println!(
                "{} sensors, {} tasks",
                atlas.sensors.len(),
                atlas.tasks.len()
            );
            report(&manifest, &out);
        }
        Command::Metrics => report(&run_metrics(&config, &out)?, &out),
        Command::Verify { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
