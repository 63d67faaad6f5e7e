//! Command-line driver: `nvtflow run <config> [overrides]`.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};
use nvtflow::scenario::OutputFormat;
use nvtflow::ScenarioConfig;

#[derive(Parser)]
#[command(
    name = "nvtflow",
    version,
    about = "Diffuse-interface two-phase flow with Peng-Robinson thermodynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario described by a TOML config file.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario config file.
    config: PathBuf,
    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of time steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Time step size in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Write a snapshot every K steps (0: initial and final only).
    #[arg(long, value_name = "K")]
    snapshot_every: Option<usize>,
    /// Snapshot format.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Vtk,
    Both,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Vtk => OutputFormat::Vtk,
            Format::Both => OutputFormat::Both,
        }
    }
}

fn load(args: &RunArgs) -> anyhow::Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        // relative to the working directory, not the config file
        cfg.output.dir = std::env::current_dir()
            .context("cannot resolve the working directory")?
            .join(out);
    }
    if let Some(steps) = args.steps {
        cfg.solver.n_steps = steps;
    }
    if let Some(dt) = args.dt {
        cfg.solver.dt = dt;
    }
    if let Some(k) = args.snapshot_every {
        cfg.output.snapshot_every = k;
    }
    if let Some(f) = args.format {
        cfg.output.format = f.into();
    }
    Ok(cfg)
}

fn run(args: &RunArgs) -> anyhow::Result<()> {
    let cfg = load(args)?;
    let dir = cfg.output_dir();
    info!(
        "{}: {} steps of {:e} s, output in {}",
        args.config.display(),
        cfg.solver.n_steps,
        cfg.solver.dt,
        dir.display()
    );
    let summary =
        nvtflow::run::<f64>(&cfg).with_context(|| format!("run failed, partial output kept in {}", dir.display()))?;
    let first = &summary.energy[0];
    let last = summary.energy.last().unwrap_or(first);
    let iterations = summary.steps.iter().map(|s| s.iterations).max().unwrap_or(0);
    println!(
        "{} steps, total energy {:.10e} -> {:.10e} J, max nonlinear iterations {iterations}, output in {}",
        summary.steps.len(),
        first.total,
        last.total,
        dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
