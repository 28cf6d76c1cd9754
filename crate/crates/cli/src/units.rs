//! Expansion of a config into individual systems.

use std::path::PathBuf;

use anyhow::{bail, Result};
use vlf_core::lenopt::heuristic_lengths;
use vlf_core::punctures::TransmissionSchedule;
use vlf_core::trellis::GeneratorSet;
use vlf_core::vlfsim::SystemSpec;

use crate::config::{ChannelConfig, CodeConfig, ExperimentConfig, ScheduleKind};

/// Settings that change how a run executes but never its results.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub quiet: bool,
    /// Continue from a matching checkpoint if one exists.
    pub resume: bool,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunOptions { out_dir: out_dir.into(), workers: 0, quiet: true, resume: true }
    }

    pub fn with_workers(self, workers: usize) -> Self {
        RunOptions { workers, ..self }
    }

    pub(crate) fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// One (code, channel, k) combination.
#[derive(Debug, Clone)]
pub struct Unit {
    pub code: CodeConfig,
    pub gens: GeneratorSet,
    pub channel: ChannelConfig,
    pub k: usize,
}

impl Unit {
    /// Stable identifier such as `64-tb_awgn2dB_k16`, also used in file names.
    pub fn key(&self) -> String {
        format!("{}_{}_k{}", self.code.label().unwrap_or_default(), self.channel.label(), self.k)
    }
}

/// Codes x channels x message sizes, in that nesting order.
pub fn units(cfg: &ExperimentConfig) -> Result<Vec<Unit>> {
    if cfg.codes.is_empty() {
        bail!("codes: at least one code is required");
    }
    if cfg.channels.is_empty() {
        bail!("channels: at least one channel is required");
    }
    let mut out = Vec::new();
    for code in &cfg.codes {
        let gens = code.generators()?;
        for channel in &cfg.channels {
            for k in cfg.k.values() {
                out.push(Unit { code: code.clone(), gens, channel: *channel, k });
            }
        }
    }
    Ok(out)
}

/// The system simulated for `unit`. `designed` supplies lengths for the
/// `optimize` schedule kind.
pub fn system_spec(cfg: &ExperimentConfig, unit: &Unit, designed: Option<&[usize]>) -> Result<SystemSpec> {
    let policy = cfg.policy.stopping_policy()?;
    let input_len = unit.k + policy.check_bits();
    let mode = unit.code.mode();
    let mother = unit.gens.codeword_len(input_len, mode);
    let seed = cfg.schedule.seed;
    let schedule = match cfg.schedule.kind {
        ScheduleKind::EverySymbol => TransmissionSchedule::every_symbol(mother, seed)?,
        ScheduleKind::Lengths => {
            let states = unit.gens.num_states();
            let Some(lengths) = cfg.schedule.lengths_for(states, unit.k) else {
                bail!("schedule.lengths: nothing for {states}-state code at k = {}", unit.k);
            };
            TransmissionSchedule::from_increments(mother, seed, lengths)?
        }
        ScheduleKind::Heuristic => TransmissionSchedule::from_increments(mother, seed, &heuristic_lengths(input_len))?,
        ScheduleKind::Optimize => {
            let Some(lengths) = designed else {
                bail!("schedule.kind = \"optimize\" needs designed lengths");
            };
            TransmissionSchedule::from_increments(mother, seed, lengths)?
        }
    };
    let spec = SystemSpec {
        code: unit.gens,
        mode,
        k: unit.k,
        channel: unit.channel.spec()?,
        policy,
        schedule,
        max_blocks: cfg.campaign.max_blocks,
    };
    spec.validate()?;
    Ok(spec)
}
