use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ddmhe_harness::commands;
use ddmhe_harness::config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "ddmhe",
    version,
    about = "Data-driven moving horizon estimation experiments"
)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Config override `key=value`, applied after the file. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect an offline dataset and report persistent excitation.
    Collect,
    /// Fit both estimators and run them on one online trajectory.
    Estimate {
        /// Dataset to fit from; collected fresh when omitted.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Monte Carlo sweep over the `sweep_N` × `sweep_sigma` grid.
    Sweep,
    /// Sample complexity, contraction constants and the error bound.
    Bounds {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Plot-ready files from results.csv, gaps.csv or estimates.csv.
    Plotdata {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
    },
    /// The full SEA pipeline.
    BenchSea,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_text(&text)
            .with_context(|| format!("in {}", path.display()))?;
    }
    for kv in &cli.overrides {
        cfg.apply_override(kv)
            .with_context(|| format!("in --set {kv}"))?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Vec<String>> {
    let cfg = load_config(cli)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Collect => commands::cmd_collect(&cfg, out),
        Command::Estimate { dataset } => commands::cmd_estimate(&cfg, dataset.as_deref(), out),
        Command::Sweep => commands::cmd_sweep(&cfg, out),
        Command::Bounds { dataset } => commands::cmd_bounds(&cfg, dataset.as_deref(), out),
        Command::Plotdata { inputs } => commands::cmd_plotdata(inputs, out),
        Command::BenchSea => commands::cmd_bench_sea(&cfg, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(ddmhe_harness::exit_code(&e) as u8)
        }
    }
}
