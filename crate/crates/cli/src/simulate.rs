//! `vlf simulate`: one Monte-Carlo campaign per system.

use std::collections::BTreeMap;
use std::fs;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use vlf_core::vlfsim::{resume_campaign, CampaignOptions, CampaignState, EstimatorReport, StopRule};

use crate::config::{ExperimentConfig, ScheduleKind};
use crate::optimize::design_lengths;
use crate::output::{write_atomic, write_table};
use crate::units::{system_spec, units, RunOptions};

pub const CHECKPOINT_FILE: &str = "simulate.checkpoint.json";

/// One line of `simulate.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub code: String,
    pub states: usize,
    pub polys: Vec<String>,
    pub mode: String,
    pub k: usize,
    pub input_len: usize,
    pub channel: String,
    pub channel_param: f64,
    pub capacity: f64,
    pub policy: String,
    pub epsilon: Option<f64>,
    pub mother_len: usize,
    pub m: usize,
    pub decode_points: Vec<usize>,
    pub trials: u64,
    pub errors: u64,
    pub declared: u64,
    pub truncated: u64,
    pub lambda: f64,
    pub lambda_stddev: f64,
    pub lambda_rel_se: f64,
    pub throughput: f64,
    pub pue: f64,
    pub pue_ci_lo: f64,
    pub pue_ci_hi: f64,
    pub ci_degenerate: bool,
    pub declared_rate: f64,
    pub decode_attempts: u64,
    pub partial: bool,
    pub nack_probs: Vec<f64>,
    pub generator: String,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    resume_hash: String,
    units: BTreeMap<String, CampaignState>,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub rows: Vec<SimRow>,
    /// Invariant violations; non-empty means the run must exit nonzero.
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

pub(crate) fn stop_rule(cfg: &ExperimentConfig) -> StopRule {
    StopRule {
        min_errors: cfg.campaign.min_errors.filter(|&n| n > 0),
        min_declared: cfg.campaign.min_declared.filter(|&n| n > 0),
        max_trials: cfg.campaign.max_trials,
    }
}

/// Upper limit on `P_UE` that a sound `epsilon` stopping rule may show:
/// `epsilon` plus three binomial standard errors.
pub fn soundness_limit(epsilon: f64, trials: u64) -> f64 {
    epsilon + 3.0 * (epsilon * (1.0 - epsilon) / trials.max(1) as f64).sqrt()
}

pub fn simulate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SimOutcome> {
    let hash = cfg.hash();
    let resume_hash = cfg.resume_hash();
    let ckpt_path = opts.out_dir.join(CHECKPOINT_FILE);
    let mut ckpt = Checkpoint { resume_hash: resume_hash.clone(), units: BTreeMap::new() };
    if opts.resume && ckpt_path.exists() {
        let text = fs::read_to_string(&ckpt_path)?;
        match serde_json::from_str::<Checkpoint>(&text) {
            Ok(c) if c.resume_hash == resume_hash => {
                opts.note(format!("resuming {} systems from {}", c.units.len(), ckpt_path.display()));
                ckpt = c;
            }
            _ => opts.note(format!("ignoring {} from a different configuration", ckpt_path.display())),
        }
    }

    let stop = stop_rule(cfg);
    let campaign = CampaignOptions::new(stop).with_workers(opts.workers);
    let interval = cfg.campaign.checkpoint_secs;
    let mut out = SimOutcome { rows: Vec::new(), violations: Vec::new(), warnings: Vec::new() };

    for unit in units(cfg)? {
        let key = unit.key();
        let designed = if cfg.schedule.kind == ScheduleKind::Optimize {
            let row = design_lengths(cfg, &unit, opts)?;
            match row.increments.clone() {
                Some(v) => Some(v),
                None => anyhow::bail!("{key}: no feasible lengths: {}", row.note),
            }
        } else {
            None
        };
        let spec = system_spec(cfg, &unit, designed.as_deref()).with_context(|| key.clone())?;
        let points = spec.schedule.decode_points().len();
        let start = match ckpt.units.get(&key) {
            Some(s) if s.seed == cfg.seed && s.tally.nacks.len() == points => s.clone(),
            _ => CampaignState::new(cfg.seed, points),
        };
        opts.note(format!("{key}: starting at trial {}", start.next_trial));
        let began = Instant::now();
        let mut last_save = Instant::now();
        let state = resume_campaign(&spec, &campaign, start, |s| {
            if interval > 0 && last_save.elapsed().as_secs() >= interval {
                ckpt.units.insert(key.clone(), s.clone());
                if let Ok(text) = serde_json::to_string(&ckpt) {
                    let _ = write_atomic(&ckpt_path, &text);
                }
                last_save = Instant::now();
                opts.note(format!("  {key}: {} trials, {} errors", s.tally.trials, s.tally.errors));
            }
        })?;
        ckpt.units.insert(key.clone(), state.clone());
        write_atomic(&ckpt_path, &serde_json::to_string(&ckpt)?)?;

        let rep = EstimatorReport::from_state(&spec, &state, stop);
        opts.note(format!(
            "{key}: S = {}, errors = {}, lambda = {:.3}, Rt = {:.4}, P_UE = {:.3e} ({:.1}s)",
            rep.trials,
            rep.errors,
            rep.lambda_hat,
            rep.rt_hat,
            rep.pue_hat,
            began.elapsed().as_secs_f64()
        ));
        if let Some(eps) = spec.policy.epsilon() {
            let limit = soundness_limit(eps, rep.trials);
            if rep.pue_hat > limit {
                out.violations.push(format!(
                    "{key}: P_UE = {:.4e} exceeds epsilon + 3 sigma = {limit:.4e} over {} trials",
                    rep.pue_hat, rep.trials
                ));
            }
        }
        if rep.partial {
            out.warnings.push(format!("{key}: stopped at max_trials before reaching the error target"));
        }
        if rep.truncated > 0 {
            out.warnings.push(format!("{key}: {} trials abandoned after max_blocks", rep.truncated));
        }
        out.rows.push(SimRow {
            code: unit.code.label()?,
            states: unit.gens.num_states(),
            polys: unit.gens.octal().to_vec(),
            mode: spec.mode.to_string(),
            k: unit.k,
            input_len: spec.input_len(),
            channel: unit.channel.name().to_string(),
            channel_param: unit.channel.param(),
            capacity: spec.channel.capacity(),
            policy: spec.policy.label(),
            epsilon: spec.policy.epsilon(),
            mother_len: spec.schedule.mother_len(),
            m: points,
            decode_points: spec.schedule.decode_points().to_vec(),
            trials: rep.trials,
            errors: rep.errors,
            declared: rep.declared,
            truncated: rep.truncated,
            lambda: rep.lambda_hat,
            lambda_stddev: rep.sigma_lambda_hat,
            lambda_rel_se: rep.lambda_rel_stderr(),
            throughput: rep.rt_hat,
            pue: rep.pue_hat,
            pue_ci_lo: rep.ci.0,
            pue_ci_hi: rep.ci.1,
            ci_degenerate: rep.ci_degenerate,
            declared_rate: rep.declared_rate,
            decode_attempts: rep.decode_attempts,
            partial: rep.partial,
            nack_probs: rep.nack_prob.clone(),
            generator: rep.generator.clone(),
            seed: cfg.seed,
            config_hash: hash.clone(),
        });
    }
    write_table(&opts.out_dir, "simulate", &out.rows)?;
    Ok(out)
}
