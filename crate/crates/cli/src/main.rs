use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use vlf_cli::presets::{preset, preset_text, PRESETS};
use vlf_cli::{bounds, optimize, simulate, ExperimentConfig, RunOptions};

/// Exit status when a run finishes but an invariant check fails.
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(name = "vlf", version, about = "Variable-length feedback coding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run simulation campaigns and write simulate.csv / simulate.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Ignore any checkpoint in the output directory.
        #[arg(long)]
        fresh: bool,
    },
    /// Compute achievability bounds and write bounds.csv / bounds.json.
    Bounds {
        #[command(flatten)]
        common: Common,
    },
    /// Estimate retransmission models and choose transmission lengths.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// List the built-in presets, or print one as TOML.
    Presets { name: Option<String> },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration name (see `vlf presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Undetected errors to collect per system.
    #[arg(long)]
    min_errors: Option<u64>,
    /// Trial limit per system.
    #[arg(long)]
    max_trials: Option<u64>,
    /// Output directory (default: the configuration's out_dir, else `out`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Suppress progress messages.
    #[arg(long, short)]
    quiet: bool,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, RunOptions)> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), None) => ExperimentConfig::load(path)?,
            (None, Some(name)) => preset(name)?,
            _ => bail!("give exactly one of --config or --preset"),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.min_errors {
            cfg.campaign.min_errors = Some(n);
        }
        if let Some(n) = self.max_trials {
            cfg.campaign.max_trials = n;
        }
        cfg.validate()?;
        let out_dir = self.out_dir.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| "out".into());
        let opts = RunOptions { out_dir, workers: self.workers, quiet: self.quiet, resume: true };
        Ok((cfg, opts))
    }
}

fn report(warnings: &[String], violations: &[String]) -> ExitCode {
    for w in warnings {
        eprintln!("warning: {w}");
    }
    for v in violations {
        eprintln!("invariant violated: {v}");
    }
    if violations.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VIOLATION)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    Ok(match cli.command {
        Command::Simulate { common, fresh } => {
            let (cfg, mut opts) = common.load()?;
            opts.resume = !fresh;
            let out = simulate::simulate(&cfg, &opts)?;
            report(&out.warnings, &out.violations)
        }
        Command::Bounds { common } => {
            let (cfg, opts) = common.load()?;
            let out = bounds::bounds(&cfg, &opts)?;
            report(&out.warnings, &[])
        }
        Command::Optimize { common } => {
            let (cfg, opts) = common.load()?;
            let out = optimize::optimize(&cfg, &opts)?;
            report(&out.warnings, &[])
        }
        Command::Presets { name: Some(name) } => {
            print!("{}", preset_text(&name)?);
            ExitCode::SUCCESS
        }
        Command::Presets { name: None } => {
            for (name, _) in PRESETS {
                println!("{name:22} {}", preset(name)?.description);
            }
            ExitCode::SUCCESS
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
