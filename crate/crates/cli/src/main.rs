use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use nnarx_mpc::harness::{Pipeline, PipelineConfig, RunMetrics};

#[derive(Parser)]
#[command(name = "nnarx-mpc", version, about = "Identify a neural NARX model of the water heater and run offset-free MPC on it")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Pipeline configuration (JSON); defaults are used for missing fields.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Artifact directory.
    #[arg(long, short, global = true, default_value = "runs/default")]
    out: PathBuf,

    /// Overrides the experiment and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Recompute stages even when cached artifacts match.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the identification experiments.
    Generate,
    /// Train the model.
    Train,
    /// Solve and certify the equilibrium of every scenario setpoint.
    Tune,
    /// Closed loop with the integral-action controller.
    Run,
    /// Closed loop with the disturbance-estimation controller, side by side.
    Compare,
    /// Write the report and metrics table.
    Report,
    /// Every stage in order.
    All,
}

fn summary(m: &RunMetrics) {
    println!("{}:", m.controller);
    for e in &m.events {
        let settle = e.settling_samples.map_or_else(|| "never".into(), |s| format!("{s} samples"));
        println!("  {:<22} settles in {:<12} steady |e| {:.3e} K", e.label, settle, e.steady_offset);
    }
    println!(
        "  max violation {:.2e}, sum du^2 {:.4e}, solver failures {}",
        m.max_violation, m.total_squared_increment, m.solver_failures
    );
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    let mut pipeline = Pipeline::new(config, &cli.out)?;
    pipeline.force = cli.force;

    match cli.command {
        Command::Generate => {
            let r = pipeline.generate()?;
            println!("records: train {}, validation {}, test {}", r.train.len(), r.validation.len(), r.test.len());
        }
        Command::Train => {
            let (_, report) = pipeline.train()?;
            println!(
                "test FIT {:.2}%, contraction margin {:.4}, best epoch {}",
                report.test_fit, report.contraction_margin, report.best_epoch
            );
        }
        Command::Tune => {
            for r in pipeline.tune()?.setpoints {
                println!(
                    "{} K: u = {:.5}, rho(A) = {:.4}, mu_max = {:.4}, mu = {:.4}",
                    r.setpoint[0], r.equilibrium_input[0], r.linearization_radius, r.mu_tilde_max, r.mu_tilde
                );
            }
        }
        Command::Run => summary(&pipeline.run()?),
        Command::Compare => {
            let c = pipeline.compare()?;
            summary(&c.offset_free);
            summary(&c.deb);
        }
        Command::Report | Command::All => {
            let path = pipeline.all()?;
            println!("{}", path.display());
        }
    }
    Ok(())
}
