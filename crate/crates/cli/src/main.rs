use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hdfts_cli::{resolve_threads, run_with_threads, CliError, ExperimentConfig, Mode, THREADS_ENV};

#[derive(Parser, Debug)]
#[command(name = "hdfts", version, about = "Segmentation and forecasting of high-dimensional functional time series")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// JSON experiment config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads (overridden by HDFTS_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Long-format CSV panel (`t,series,u,value`).
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Monte Carlo replications of a simulated design.
    Simulate(Common),
    /// Segment one panel and write its diagnostics.
    Segment(Common),
    /// Forecast past the end of one panel.
    Forecast(Common),
    /// Expanding-window evaluation on one panel.
    Evaluate(Common),
    /// Print the default config.
    Config,
}

fn build_config(mode: Mode, c: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.mode = mode;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(reps) = c.reps {
        cfg.replications = reps;
    }
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    if let Some(input) = &c.input {
        cfg.input = Some(input.clone());
    }
    Ok(cfg)
}

fn run(mode: Mode, c: &Common) -> Result<(), CliError> {
    let cfg = build_config(mode, c)?;
    let env = std::env::var(THREADS_ENV).ok();
    let threads = resolve_threads(env.as_deref(), c.threads, cfg.threads)?;
    let outcome = run_with_threads(&cfg, threads)?;
    for f in &outcome.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (mode, common) = match &cli.verb {
        Verb::Simulate(c) => (Mode::Simulate, c),
        Verb::Segment(c) => (Mode::Segment, c),
        Verb::Forecast(c) => (Mode::Forecast, c),
        Verb::Evaluate(c) => (Mode::Evaluate, c),
        Verb::Config => {
            let text = serde_json::to_string_pretty(&ExperimentConfig::default()).expect("default config serializes");
            println!("{text}");
            return ExitCode::SUCCESS;
        }
    };
    match run(mode, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
