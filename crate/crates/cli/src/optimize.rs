//! `vlf optimize`: retransmission model estimation and length selection.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vlf_core::lenopt::{
    estimate_retrans_grid, exhaustive_lengths, fit_logpoly, optimize_lengths, GridOptions, LengthConstraints,
    OptimizedLengths, RetransmissionModel,
};
use vlf_core::punctures::cumulative;
use vlf_core::trellis::TerminationMode;
use vlf_core::Error as CoreError;

use crate::config::{hex16, ExperimentConfig, PolicyKind};
use crate::output::{write_atomic, write_table};
use crate::units::{units, RunOptions, Unit};

/// One line of `optimize.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptRow {
    pub code: String,
    pub channel: String,
    pub channel_param: Option<f64>,
    pub k: usize,
    pub epsilon: f64,
    pub model: String,
    pub m: usize,
    pub cap: Option<usize>,
    pub final_below: Option<f64>,
    /// `ok` or `infeasible`.
    pub status: String,
    pub increments: Option<Vec<usize>>,
    pub decode_points: Option<Vec<usize>>,
    pub lambda: Option<f64>,
    pub throughput: Option<f64>,
    pub p_final: Option<f64>,
    pub restart: Option<usize>,
    pub exhaustive_increments: Option<Vec<usize>>,
    pub exhaustive_lambda: Option<f64>,
    pub matches_exhaustive: Option<bool>,
    pub note: String,
    pub seed: u64,
    pub config_hash: String,
}

/// One line of a per-system model curve file.
#[derive(Debug, Clone, Serialize)]
struct CurveRow {
    n: usize,
    p_fit: f64,
    grid_p: Option<f64>,
    grid_stderr: Option<f64>,
    grid_trials: Option<u64>,
    grid_triggers: Option<u64>,
    outlier: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CachedModel {
    cache_key: String,
    model: RetransmissionModel,
}

#[derive(Debug, Clone)]
pub struct OptOutcome {
    pub rows: Vec<OptRow>,
    pub warnings: Vec<String>,
}

fn models_dir(opts: &RunOptions) -> PathBuf {
    opts.out_dir.join("models")
}

fn cache_key(cfg: &ExperimentConfig, unit: &Unit) -> String {
    let o = &cfg.optimize;
    let text = format!(
        "{:?}|{:?}|{}|{:?}|{}|{}|{}|{}|{}|{}",
        unit.gens.octal(),
        unit.code.mode,
        unit.k,
        unit.channel,
        cfg.policy.epsilon,
        cfg.schedule.seed,
        cfg.seed,
        o.min_triggers,
        o.max_grid_trials,
        o.degree
    );
    hex16(text.as_bytes())
}

/// The simulated retransmission model for `unit`, loaded from the cache
/// under `out_dir/models` when its key matches.
pub fn campaign_model(cfg: &ExperimentConfig, unit: &Unit, opts: &RunOptions) -> Result<RetransmissionModel> {
    if unit.code.mode() != TerminationMode::TailBiting {
        bail!("{}: length optimization needs a tail-biting code", unit.key());
    }
    if cfg.policy.kind != PolicyKind::Reliability {
        bail!("length optimization needs the reliability policy");
    }
    let key = cache_key(cfg, unit);
    let path = models_dir(opts).join(format!("{}.model.json", unit.key()));
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(c) = serde_json::from_str::<CachedModel>(&text) {
            if c.cache_key == key {
                opts.note(format!("{}: model loaded from {}", unit.key(), path.display()));
                return Ok(c.model);
            }
        }
    }
    opts.note(format!("{}: estimating retransmission probabilities", unit.key()));
    let grid_opts =
        GridOptions { min_triggers: cfg.optimize.min_triggers, max_trials: cfg.optimize.max_grid_trials, workers: opts.workers };
    let grid = estimate_retrans_grid(
        unit.gens,
        unit.k,
        unit.channel.spec()?,
        cfg.policy.epsilon,
        cfg.schedule.seed,
        cfg.seed,
        grid_opts,
    )?;
    let max_len = unit.gens.codeword_len(unit.k, TerminationMode::TailBiting);
    let model = fit_logpoly(unit.k, max_len, &grid, cfg.optimize.degree)?;
    write_atomic(&path, &serde_json::to_string_pretty(&CachedModel { cache_key: key, model: model.clone() })?)?;
    Ok(model)
}

fn write_curve(opts: &RunOptions, stem: &str, model: &RetransmissionModel) -> Result<()> {
    let outliers: Vec<usize> = model.fit.as_ref().map(|f| f.outliers.clone()).unwrap_or_default();
    let rows: Vec<CurveRow> = (1..=model.max_len)
        .map(|n| {
            let g = model.grid.iter().position(|g| g.n == n);
            let s = g.map(|i| &model.grid[i]);
            CurveRow {
                n,
                p_fit: model.p(n),
                grid_p: s.map(|s| s.p),
                grid_stderr: s.map(|s| s.stderr),
                grid_trials: s.map(|s| s.trials),
                grid_triggers: s.map(|s| s.triggers),
                outlier: g.map(|i| outliers.contains(&i)),
            }
        })
        .collect();
    write_table(&models_dir(opts), &format!("{stem}.curve"), &rows)?;
    Ok(())
}

fn optimized_row(
    cfg: &ExperimentConfig,
    model: &RetransmissionModel,
    labels: (String, String, Option<f64>),
    kind: &str,
) -> Result<OptRow> {
    let o = &cfg.optimize;
    let constraints = LengthConstraints { cap: o.cap, final_below: o.final_below };
    let (code, channel, channel_param) = labels;
    let mut row = OptRow {
        code,
        channel,
        channel_param,
        k: model.k,
        epsilon: cfg.policy.epsilon,
        model: kind.to_string(),
        m: o.m,
        cap: o.cap,
        final_below: o.final_below,
        status: "ok".into(),
        increments: None,
        decode_points: None,
        lambda: None,
        throughput: None,
        p_final: None,
        restart: None,
        exhaustive_increments: None,
        exhaustive_lambda: None,
        matches_exhaustive: None,
        note: String::new(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
    };
    let best: OptimizedLengths = match optimize_lengths(model, o.m, o.restarts, cfg.seed, constraints) {
        Ok(b) => b,
        Err(e @ (CoreError::Infeasible(_) | CoreError::Divergent(_))) => {
            row.status = "infeasible".into();
            row.note = e.to_string();
            return Ok(row);
        }
        Err(e) => return Err(e.into()),
    };
    let points = cumulative(&best.increments);
    row.p_final = points.last().map(|&n| model.p(n));
    row.throughput = Some(model.k as f64 / best.lambda);
    row.lambda = Some(best.lambda);
    row.restart = Some(best.restart);
    row.decode_points = Some(points);
    if o.check_exhaustive {
        let ex = exhaustive_lengths(model, o.m, constraints)?;
        row.matches_exhaustive = Some(ex.increments == best.increments);
        row.exhaustive_lambda = Some(ex.lambda);
        row.exhaustive_increments = Some(ex.increments);
    }
    row.increments = Some(best.increments);
    Ok(row)
}

/// Model, curve file and optimized lengths for one simulated system.
pub fn design_lengths(cfg: &ExperimentConfig, unit: &Unit, opts: &RunOptions) -> Result<OptRow> {
    let model = campaign_model(cfg, unit, opts)?;
    write_curve(opts, &unit.key(), &model)?;
    let labels = (unit.code.label()?, unit.channel.name().to_string(), Some(unit.channel.param()));
    optimized_row(cfg, &model, labels, "campaign").with_context(|| unit.key())
}

pub fn optimize(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<OptOutcome> {
    let mut out = OptOutcome { rows: Vec::new(), warnings: Vec::new() };
    if let Some(syn) = cfg.optimize.synthetic {
        for k in cfg.k.values() {
            let model = RetransmissionModel::from_probs(k, syn.probs(k))?;
            write_curve(opts, &format!("synthetic_k{k}"), &model)?;
            out.rows.push(optimized_row(cfg, &model, ("synthetic".into(), String::new(), None), "synthetic")?);
        }
    } else {
        for unit in units(cfg)? {
            out.rows.push(design_lengths(cfg, &unit, opts)?);
        }
    }
    for r in &out.rows {
        let what = format!("{} {} k = {}", r.code, r.channel, r.k);
        if r.status != "ok" {
            out.warnings.push(format!("{what}: {}", r.note));
        } else if r.matches_exhaustive == Some(false) {
            out.warnings.push(format!("{what}: optimizer missed the exhaustive optimum"));
        }
        match (&r.increments, r.lambda) {
            (Some(v), Some(l)) => opts.note(format!("{what}: lengths {v:?}, lambda = {l:.3}")),
            _ => opts.note(format!("{what}: {}", r.status)),
        }
    }
    write_table(&opts.out_dir, "optimize", &out.rows)?;
    Ok(out)
}
