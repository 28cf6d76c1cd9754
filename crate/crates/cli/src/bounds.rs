//! `vlf bounds`: random-coding achievability curves.

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use vlf_core::bounds::{m_transmission_bound, mc_bound, repeat_after_n_bound, wald_bound, BoundMethod, BoundPoint};
use vlf_core::punctures::cumulative;

use crate::config::{ChannelConfig, ExperimentConfig};
use crate::output::write_table;
use crate::units::RunOptions;

/// One line of `bounds.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub channel: String,
    pub channel_param: f64,
    pub capacity: f64,
    pub k: usize,
    pub epsilon: f64,
    pub method: String,
    /// Code whose lengths define the decode grid (m-transmission only).
    pub code_states: Option<usize>,
    pub increments: Option<Vec<usize>>,
    /// Largest decode point; the repetition period.
    pub period: Option<usize>,
    pub ell: Option<f64>,
    pub ell_stderr: Option<f64>,
    pub rate: Option<f64>,
    pub gamma: f64,
    pub walks: Option<u64>,
    pub note: String,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone)]
pub struct BoundsOutcome {
    pub rows: Vec<BoundRow>,
    pub warnings: Vec<String>,
}

struct Job {
    channel: ChannelConfig,
    k: usize,
    method: BoundMethod,
    code_states: Option<usize>,
    increments: Option<Vec<usize>>,
}

fn jobs(cfg: &ExperimentConfig) -> Result<Vec<Job>> {
    let ks = cfg.bounds.k.as_ref().unwrap_or(&cfg.k).values();
    let mut out = Vec::new();
    for &channel in &cfg.channels {
        for &method in &cfg.bounds.methods {
            for &k in &ks {
                match method {
                    BoundMethod::MTransmission => {
                        if cfg.codes.is_empty() {
                            bail!("bounds: m-transmission takes its lengths from schedule.lengths and needs codes");
                        }
                        for code in &cfg.codes {
                            let states = code.generators()?.num_states();
                            if let Some(v) = cfg.schedule.lengths_for(states, k) {
                                out.push(Job {
                                    channel,
                                    k,
                                    method,
                                    code_states: Some(states),
                                    increments: Some(v.clone()),
                                });
                            }
                        }
                    }
                    _ => out.push(Job { channel, k, method, code_states: None, increments: None }),
                }
            }
        }
    }
    Ok(out)
}

pub fn bounds(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<BoundsOutcome> {
    if cfg.channels.is_empty() {
        bail!("channels: at least one channel is required");
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.workers).build()?;
    let eps = cfg.policy.epsilon;
    let walks = cfg.bounds.walks;
    let hash = cfg.hash();
    let mut out = BoundsOutcome { rows: Vec::new(), warnings: Vec::new() };
    for job in jobs(cfg)? {
        let spec = job.channel.spec()?;
        let k = job.k;
        let result: vlf_core::Result<BoundPoint> = pool.install(|| match job.method {
            BoundMethod::Wald => wald_bound(&spec, k, eps),
            BoundMethod::MonteCarlo => mc_bound(&spec, k, eps, walks, cfg.seed),
            BoundMethod::RepeatAfterN => {
                repeat_after_n_bound(&spec, k, eps, cfg.bounds.repeat_factor * k, walks, cfg.seed)
            }
            BoundMethod::MTransmission => {
                m_transmission_bound(&spec, k, eps, job.increments.as_deref().unwrap_or(&[]), walks, cfg.seed)
            }
        });
        let period = match job.method {
            BoundMethod::RepeatAfterN => Some(cfg.bounds.repeat_factor * k),
            BoundMethod::MTransmission => job.increments.as_deref().and_then(|v| cumulative(v).last().copied()),
            _ => None,
        };
        let mut row = BoundRow {
            channel: job.channel.name().to_string(),
            channel_param: job.channel.param(),
            capacity: spec.capacity(),
            k,
            epsilon: eps,
            method: job.method.as_str().to_string(),
            code_states: job.code_states,
            increments: job.increments,
            period,
            ell: None,
            ell_stderr: None,
            rate: None,
            gamma: vlf_core::bounds::threshold(k, eps).unwrap_or(f64::NAN),
            walks: (job.method != BoundMethod::Wald).then_some(walks),
            note: String::new(),
            seed: cfg.seed,
            config_hash: hash.clone(),
        };
        match result {
            Ok(p) => {
                row.ell = Some(p.ell);
                row.ell_stderr = Some(p.ell_stderr);
                row.rate = Some(p.rate);
            }
            Err(e) => {
                let msg = format!("{} k = {k} {}: {e}", row.channel, row.method);
                opts.note(&msg);
                out.warnings.push(msg);
                row.note = e.to_string();
            }
        }
        out.rows.push(row);
    }
    opts.note(format!("{} bound points", out.rows.len()));
    write_table(&opts.out_dir, "bounds", &out.rows)?;
    Ok(out)
}
