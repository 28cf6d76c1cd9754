//! Choosing incremental transmission lengths.
//!
//! The retransmission probability `P_re(N)` of a tail-biting code is
//! estimated by fixed-length simulation at nine lengths from `k` to `3k`,
//! interpolated by a least-squares polynomial in `N` fitted to
//! `log P_re`, and then corrected to be non-increasing. The lengths
//! `I_1, ..., I_m` are chosen by coordinate descent with diagonal steps and
//! random restarts on the repeat-after-`N_m` latency
//! `(I_1 + sum_{i<m} I_{i+1} P_re(N_i)) / (1 - P_re(N_m))`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSpec;
use crate::error::{Error, Result};
use crate::punctures::{cumulative, TransmissionSchedule};
use crate::rng::{stream_rng, uniform_below};
use crate::trellis::{GeneratorSet, TerminationMode};
use crate::vlfsim::{latency_from_nack, run_campaign, CampaignOptions, StopRule, StoppingPolicy, SystemSpec};

pub const DEFAULT_DEGREE: usize = 3;
pub const DEFAULT_RESTARTS: usize = 100;
pub const DEFAULT_MIN_TRIGGERS: u64 = 100;
/// Standardized residual above which a grid sample is reported as an outlier.
pub const OUTLIER_Z: f64 = 3.0;

const RESTART_DOMAIN: &str = "vlf/lenopt-restart";

/// One fixed-length simulation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSample {
    pub n: usize,
    pub trials: u64,
    /// Words whose posterior stayed below `1 - eps`.
    pub triggers: u64,
    pub p: f64,
    pub stderr: f64,
}

impl GridSample {
    pub fn new(n: usize, trials: u64, triggers: u64) -> Self {
        let p = triggers as f64 / trials.max(1) as f64;
        GridSample { n, trials, triggers, p, stderr: (p * (1.0 - p) / trials.max(1) as f64).sqrt() }
    }
}

/// Simulated lengths: `k` to `3k` in steps of `k/4`, rounded to integers.
pub fn grid_lengths(k: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..=8).map(|j| (4 * k + j * k + 2) / 4).collect();
    v.dedup();
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridOptions {
    pub min_triggers: u64,
    /// Per-length trial cap; lengths that never reach `min_triggers` stop here.
    pub max_trials: u64,
    pub workers: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { min_triggers: DEFAULT_MIN_TRIGGERS, max_trials: 2_000_000, workers: 0 }
    }
}

/// Estimates `P_re(N)` at [`grid_lengths`] by decoding once at each length.
///
/// Every length reuses the same puncturing order (from `schedule_seed`)
/// and the same trial streams, so the estimates are coupled across lengths.
pub fn estimate_retrans_grid(
    code: GeneratorSet,
    k: usize,
    channel: ChannelSpec,
    epsilon: f64,
    schedule_seed: u64,
    seed: u64,
    opts: GridOptions,
) -> Result<Vec<GridSample>> {
    let mother = code.codeword_len(k, TerminationMode::TailBiting);
    let base = TransmissionSchedule::every_symbol(mother, schedule_seed)?;
    grid_lengths(k)
        .into_iter()
        .filter(|&n| n <= mother)
        .map(|n| {
            let spec = SystemSpec {
                code,
                mode: TerminationMode::TailBiting,
                k,
                channel,
                policy: StoppingPolicy::reliability(epsilon).declaring_errors(),
                schedule: base.with_decode_points(vec![n])?,
                max_blocks: 1,
            };
            let stop = StopRule { min_errors: None, min_declared: Some(opts.min_triggers), max_trials: opts.max_trials };
            let rep = run_campaign(&spec, &CampaignOptions::new(stop).with_workers(opts.workers), seed)?;
            Ok(GridSample::new(n, rep.trials, rep.declared))
        })
        .collect()
}

/// Polynomial fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub degree: usize,
    /// Coefficients of `log P` in powers of `N / max_len`, constant first.
    pub coeffs: Vec<f64>,
    /// `(p_hat - p_fit) / sd(p_fit)` per grid sample.
    pub residuals: Vec<f64>,
    /// Grid lengths whose residual exceeds [`OUTLIER_Z`].
    pub outliers: Vec<usize>,
}

/// Retransmission probability for every length `0..=max_len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetransmissionModel {
    pub k: usize,
    pub max_len: usize,
    pub grid: Vec<GridSample>,
    pub fit: Option<FitInfo>,
    /// Set when no grid sample triggered a retransmission; the model is then
    /// zero from the first simulated length on.
    pub degenerate: bool,
    /// `probs[n] = P_re(n)`.
    pub probs: Vec<f64>,
}

impl RetransmissionModel {
    /// Model from explicit probabilities for lengths `0..probs.len()`.
    pub fn from_probs(k: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::DegenerateModel("need probabilities for at least one length".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::DegenerateModel("probabilities must lie in [0, 1]".into()));
        }
        Ok(RetransmissionModel { k, max_len: probs.len() - 1, grid: Vec::new(), fit: None, degenerate: false, probs })
    }

    pub fn p(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    /// Smallest length with `P_re < eps`, if any.
    pub fn first_below(&self, eps: f64) -> Option<usize> {
        (1..=self.max_len).find(|&n| self.probs[n] < eps)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parameter(format!("serializing model: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parameter(format!("parsing model: {e}")))
    }
}

/// Least-squares polynomial of `degree` in `N` through `log p_hat`, clamped
/// to `[0, 1]` and made non-increasing.
///
/// Samples with `p_hat = 0` cannot enter the log fit; the degree drops when
/// fewer than `degree + 1` positive samples remain. Lengths below the first
/// grid sample get `P = 1`.
pub fn fit_logpoly(k: usize, max_len: usize, grid: &[GridSample], degree: usize) -> Result<RetransmissionModel> {
    if grid.is_empty() {
        return Err(Error::DegenerateModel("empty grid".into()));
    }
    if grid.windows(2).any(|w| w[0].n >= w[1].n) || grid.last().is_some_and(|g| g.n > max_len) {
        return Err(Error::DegenerateModel("grid lengths must increase and stay within max_len".into()));
    }
    let first = grid[0].n;
    let mut probs = vec![1.0; max_len + 1];
    let positive: Vec<&GridSample> = grid.iter().filter(|g| g.p > 0.0).collect();
    if positive.is_empty() {
        probs[first..].iter_mut().for_each(|p| *p = 0.0);
        return Ok(RetransmissionModel { k, max_len, grid: grid.to_vec(), fit: None, degenerate: true, probs });
    }
    let degree = degree.min(positive.len() - 1);
    let scale = max_len as f64;
    let design = DMatrix::from_fn(positive.len(), degree + 1, |r, c| (positive[r].n as f64 / scale).powi(c as i32));
    let target = DVector::from_iterator(positive.len(), positive.iter().map(|g| g.p.ln()));
    let coeffs = design
        .svd(true, true)
        .solve(&target, 1e-12)
        .map_err(|e| Error::DegenerateModel(format!("least squares failed: {e}")))?;
    let coeffs: Vec<f64> = coeffs.iter().copied().collect();
    let eval = |n: usize| {
        let x = n as f64 / scale;
        coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c).exp().clamp(0.0, 1.0)
    };
    for (n, p) in probs.iter_mut().enumerate().skip(first) {
        *p = eval(n);
    }
    non_increasing(&mut probs);

    let residuals: Vec<f64> = grid
        .iter()
        .map(|g| {
            let q = probs[g.n];
            let sd = (q * (1.0 - q) / g.trials.max(1) as f64).sqrt();
            if sd > 0.0 {
                (g.p - q) / sd
            } else if g.p == q {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let outliers = grid.iter().zip(&residuals).filter(|(_, z)| z.abs() > OUTLIER_Z).map(|(g, _)| g.n).collect();
    Ok(RetransmissionModel {
        k,
        max_len,
        grid: grid.to_vec(),
        fit: Some(FitInfo { degree, coeffs, residuals, outliers }),
        degenerate: false,
        probs,
    })
}

/// In-place least-squares projection onto non-increasing sequences
/// (pool adjacent violators).
pub fn non_increasing(v: &mut [f64]) {
    // Blocks of (sum, count), merged while a later block mean exceeds an earlier one.
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(v.len());
    for &x in v.iter() {
        blocks.push((x, 1));
        while blocks.len() >= 2 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s1 / c1 as f64 > s0 / c0 as f64 {
                blocks.pop();
                *blocks.last_mut().expect("two blocks") = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut i = 0;
    for (s, c) in blocks {
        let mean = s / c as f64;
        v[i..i + c].iter_mut().for_each(|x| *x = mean);
        i += c;
    }
}

/// Latency of `increments` under the model.
pub fn objective_latency(model: &RetransmissionModel, increments: &[usize]) -> Result<f64> {
    if increments.is_empty() || increments.contains(&0) {
        return Err(Error::Parameter(format!("lengths must be positive, got {increments:?}")));
    }
    let points = cumulative(increments);
    let last = *points.last().expect("non-empty");
    if last > model.max_len {
        return Err(Error::Infeasible(format!("N_m = {last} exceeds the model range {}", model.max_len)));
    }
    let nack: Vec<f64> = points.iter().map(|&n| model.probs[n]).collect();
    latency_from_nack(&nack, increments)
}

/// Limits on the final cumulative length `N_m`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LengthConstraints {
    /// Upper limit on `N_m` (the model range always applies).
    pub cap: Option<usize>,
    /// Require `P_re(N_m) < eps`, as when an error is declared after the
    /// final attempt.
    pub final_below: Option<f64>,
}

impl LengthConstraints {
    /// Feasible range of `N_m` for `m` transmissions.
    fn range(&self, model: &RetransmissionModel, m: usize) -> Result<(usize, usize)> {
        let hi = self.cap.unwrap_or(model.max_len).min(model.max_len);
        let mut lo = m;
        if let Some(eps) = self.final_below {
            match model.first_below(eps) {
                Some(n) => lo = lo.max(n),
                None => {
                    return Err(Error::Infeasible(format!(
                        "P_re never drops below {eps} within {} symbols",
                        model.max_len
                    )))
                }
            }
        }
        if lo > hi {
            let why = match self.final_below {
                Some(eps) if hi >= m => format!("P_re({hi}) = {:.3e} is not below {eps}", model.p(hi)),
                _ => format!("{m} transmissions do not fit in {hi} symbols"),
            };
            return Err(Error::Infeasible(why));
        }
        Ok((lo, hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedLengths {
    pub increments: Vec<usize>,
    pub lambda: f64,
    /// Restart index that produced the result.
    pub restart: usize,
}

/// `{3k/2, k/4, k/4, k/4, 3k/4}`, a length choice that works across SNRs.
pub fn heuristic_lengths(k: usize) -> Vec<usize> {
    let q = (k / 4).max(1);
    vec![(3 * k / 2).max(1), q, q, q, (3 * k / 4).max(1)]
}

/// Minimizes the latency over `m` positive integer lengths.
///
/// Each restart descends by unit steps in single coordinates until none
/// helps, then tries the four diagonal steps of every coordinate pair,
/// taking the best improving one, and returns to single steps after any
/// diagonal move. The first restart starts from [`heuristic_lengths`] when
/// `m = 5` and that start is feasible; the others start from uniform
/// random feasible vectors. Ties between restarts go to the
/// lexicographically smallest vector.
pub fn optimize_lengths(
    model: &RetransmissionModel,
    m: usize,
    restarts: usize,
    seed: u64,
    constraints: LengthConstraints,
) -> Result<OptimizedLengths> {
    if m == 0 || restarts == 0 {
        return Err(Error::Parameter("need m >= 1 and at least one restart".into()));
    }
    let (lo, hi) = constraints.range(model, m)?;
    let eval = |v: &[usize]| -> f64 {
        let total: usize = v.iter().sum();
        if v.contains(&0) || total < lo || total > hi {
            return f64::INFINITY;
        }
        objective_latency(model, v).unwrap_or(f64::INFINITY)
    };
    let runs: Vec<(f64, Vec<usize>)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let heuristic = heuristic_lengths(model.k);
            let start = if r == 0 && m == 5 && eval(&heuristic).is_finite() {
                heuristic
            } else {
                random_start(m, lo, hi, &mut stream_rng(RESTART_DOMAIN, seed, r as u64))
            };
            descend(start, &eval)
        })
        .collect();
    let mut best: Option<(usize, f64, Vec<usize>)> = None;
    for (r, (lambda, v)) in runs.into_iter().enumerate() {
        let better = match &best {
            None => true,
            Some((_, bl, bv)) => lambda < *bl || (lambda == *bl && v < *bv),
        };
        if better {
            best = Some((r, lambda, v));
        }
    }
    let (restart, lambda, increments) = best.expect("at least one restart");
    if !lambda.is_finite() {
        return Err(Error::Infeasible("no restart reached a finite latency".into()));
    }
    Ok(OptimizedLengths { increments, lambda, restart })
}

/// Uniform `N_m` in `lo..=hi`, split uniformly into `m` positive parts.
fn random_start<R: rand::RngCore>(m: usize, lo: usize, hi: usize, rng: &mut R) -> Vec<usize> {
    let total = lo + uniform_below(rng, (hi - lo + 1) as u64) as usize;
    // m - 1 distinct cut points in 1..total.
    let mut cuts: Vec<usize> = Vec::with_capacity(m);
    while cuts.len() < m - 1 {
        let c = 1 + uniform_below(rng, (total - 1) as u64) as usize;
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    cuts.push(total);
    let mut prev = 0;
    cuts.iter()
        .map(|&c| {
            let i = c - prev;
            prev = c;
            i
        })
        .collect()
}

fn descend(mut cur: Vec<usize>, eval: &impl Fn(&[usize]) -> f64) -> (f64, Vec<usize>) {
    let m = cur.len();
    let mut val = eval(&cur);
    loop {
        // Single-coordinate steps, repeated until none improves.
        let mut moved = true;
        while moved {
            moved = false;
            for i in 0..m {
                for up in [true, false] {
                    loop {
                        let Some(cand) = step(&cur, &[(i, up)]) else { break };
                        let v = eval(&cand);
                        if v < val {
                            cur = cand;
                            val = v;
                            moved = true;
                        } else {
                            break;
                        }
                    }
                }
            }
        }
        // Diagonal steps over all pairs.
        let mut diag = false;
        for i in 0..m {
            for j in i + 1..m {
                let mut best: Option<(f64, Vec<usize>)> = None;
                for (ui, uj) in [(true, true), (true, false), (false, true), (false, false)] {
                    if let Some(cand) = step(&cur, &[(i, ui), (j, uj)]) {
                        let v = eval(&cand);
                        if v < val && best.as_ref().map_or(true, |b| v < b.0) {
                            best = Some((v, cand));
                        }
                    }
                }
                if let Some((v, cand)) = best {
                    cur = cand;
                    val = v;
                    diag = true;
                }
            }
        }
        if !diag {
            return (val, cur);
        }
    }
}

fn step(v: &[usize], moves: &[(usize, bool)]) -> Option<Vec<usize>> {
    let mut out = v.to_vec();
    for &(i, up) in moves {
        if up {
            out[i] += 1;
        } else if out[i] > 1 {
            out[i] -= 1;
        } else {
            return None;
        }
    }
    Some(out)
}

/// Exhaustive minimum over all feasible `m`-vectors; ties go to the
/// lexicographically smallest. Cost grows like `N^m`.
pub fn exhaustive_lengths(
    model: &RetransmissionModel,
    m: usize,
    constraints: LengthConstraints,
) -> Result<OptimizedLengths> {
    if m == 0 {
        return Err(Error::Parameter("need m >= 1".into()));
    }
    let (lo, hi) = constraints.range(model, m)?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut v = vec![1usize; m];
    enumerate(model, &mut v, 0, 0, lo, hi, &mut best);
    let (lambda, increments) = best.ok_or_else(|| Error::Infeasible("no feasible vector".into()))?;
    Ok(OptimizedLengths { increments, lambda, restart: 0 })
}

fn enumerate(
    model: &RetransmissionModel,
    v: &mut Vec<usize>,
    idx: usize,
    used: usize,
    lo: usize,
    hi: usize,
    best: &mut Option<(f64, Vec<usize>)>,
) {
    let m = v.len();
    if idx == m {
        if used >= lo {
            if let Ok(l) = objective_latency(model, v) {
                // Visiting in lexicographic order, so only strict improvements replace.
                if best.as_ref().map_or(true, |b| l < b.0) {
                    *best = Some((l, v.clone()));
                }
            }
        }
        return;
    }
    let remaining = m - idx - 1;
    for i in 1..=hi.saturating_sub(used + remaining) {
        v[idx] = i;
        enumerate(model, v, idx + 1, used + i, lo, hi, best);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_model(k: usize, rate: f64, offset: usize) -> RetransmissionModel {
        let max = 3 * k;
        let probs = (0..=max)
            .map(|n| if n <= offset { 1.0 } else { (-rate * (n - offset) as f64).exp() })
            .collect();
        RetransmissionModel::from_probs(k, probs).unwrap()
    }

    #[test]
    fn grid_has_nine_points() {
        assert_eq!(grid_lengths(16), vec![16, 20, 24, 28, 32, 36, 40, 44, 48]);
        assert_eq!(grid_lengths(64).len(), 9);
        assert_eq!(*grid_lengths(91).last().unwrap(), 273);
    }

    #[test]
    fn objective_special_cases() {
        let zero = RetransmissionModel::from_probs(4, vec![0.0; 13]).unwrap();
        assert_eq!(objective_latency(&zero, &[5, 2, 3]).unwrap(), 5.0);
        let m = exp_model(8, 0.2, 6);
        let p = m.p(10);
        assert!((objective_latency(&m, &[10]).unwrap() - 10.0 / (1.0 - p)).abs() < 1e-12);
        let one = RetransmissionModel::from_probs(4, vec![1.0; 13]).unwrap();
        assert!(matches!(objective_latency(&one, &[3]), Err(Error::Divergent(_))));
        assert!(objective_latency(&m, &[20, 10]).is_err());
    }

    #[test]
    fn isotonic_projection() {
        let mut v = vec![1.0, 0.5, 0.7, 0.2, 0.3, 0.1];
        non_increasing(&mut v);
        assert_eq!(v, vec![1.0, 0.6, 0.6, 0.25, 0.25, 0.1]);
        let mut w = vec![0.9, 0.5, 0.1];
        non_increasing(&mut w);
        assert_eq!(w, vec![0.9, 0.5, 0.1]);
    }

    #[test]
    fn log_linear_data_is_recovered() {
        let k = 16;
        let grid: Vec<GridSample> = grid_lengths(k)
            .into_iter()
            .map(|n| {
                let p = (-0.5 - 0.1 * n as f64).exp();
                GridSample { n, trials: 10_000, triggers: 0, p, stderr: 0.0 }
            })
            .collect();
        let model = fit_logpoly(k, 3 * k, &grid, DEFAULT_DEGREE).unwrap();
        for n in k..=3 * k {
            let want = (-0.5 - 0.1 * n as f64).exp();
            assert!(((model.p(n) - want) / want).abs() < 1e-10, "n={n}");
        }
        assert_eq!(model.p(k - 1), 1.0);
        assert!(model.fit.unwrap().outliers.is_empty());
    }

    #[test]
    fn smooth_decay_fits_within_two_sigma() {
        // Faster-than-exponential decay, as seen for tail-biting codes.
        let k = 64;
        let truth = |n: usize| (-(n as f64 / 40.0).powf(1.6) + 1.2).exp().min(1.0);
        let grid: Vec<GridSample> = grid_lengths(k)
            .into_iter()
            .map(|n| {
                let p = truth(n);
                let trials = (100.0 / p).ceil() as u64;
                let triggers = (p * trials as f64).round() as u64;
                GridSample::new(n, trials, triggers)
            })
            .collect();
        let model = fit_logpoly(k, 3 * k, &grid, DEFAULT_DEGREE).unwrap();
        let fit = model.fit.as_ref().unwrap();
        assert!(fit.residuals.iter().all(|z| z.abs() <= 2.0), "{:?}", fit.residuals);
        assert!(model.probs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn outlier_is_flagged() {
        let k = 16;
        let mut grid: Vec<GridSample> = grid_lengths(k)
            .into_iter()
            .map(|n| {
                let p = (-0.2 * n as f64).exp();
                let trials = (400.0 / p) as u64;
                GridSample::new(n, trials, (p * trials as f64).round() as u64)
            })
            .collect();
        let bad = &mut grid[5];
        *bad = GridSample::new(bad.n, bad.trials, bad.triggers * 3);
        let model = fit_logpoly(k, 3 * k, &grid, DEFAULT_DEGREE).unwrap();
        assert!(model.fit.unwrap().outliers.contains(&grid[5].n));
    }

    #[test]
    fn all_zero_grid_is_degenerate() {
        let grid: Vec<GridSample> = grid_lengths(8).into_iter().map(|n| GridSample::new(n, 1000, 0)).collect();
        let model = fit_logpoly(8, 24, &grid, 3).unwrap();
        assert!(model.degenerate);
        assert_eq!(model.p(8), 0.0);
        assert_eq!(model.p(7), 1.0);
    }

    #[test]
    fn json_round_trip() {
        let m = exp_model(8, 0.3, 4);
        assert_eq!(RetransmissionModel::from_json(&m.to_json().unwrap()).unwrap(), m);
    }

    #[test]
    fn single_transmission_matches_scan() {
        let model = exp_model(16, 0.15, 12);
        let got = optimize_lengths(&model, 1, 5, 0, LengthConstraints::default()).unwrap();
        let scan = (1..=48)
            .map(|n| (objective_latency(&model, &[n]).unwrap_or(f64::INFINITY), n))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        assert_eq!(got.increments, vec![scan.1]);
    }

    #[test]
    fn matches_exhaustive_for_small_m() {
        let models = [exp_model(16, 0.15, 12), exp_model(12, 0.4, 8), exp_model(20, 0.08, 10)];
        for model in &models {
            for m in 1..=3 {
                let c = LengthConstraints::default();
                let fast = optimize_lengths(model, m, DEFAULT_RESTARTS, 1, c).unwrap();
                let slow = exhaustive_lengths(model, m, c).unwrap();
                assert_eq!(fast.increments, slow.increments, "m={m}");
                assert_eq!(fast.lambda, slow.lambda);
            }
        }
    }

    #[test]
    fn constraints() {
        let model = exp_model(16, 0.15, 12);
        let eps = 1e-2;
        let need = model.first_below(eps).unwrap();
        let c = LengthConstraints { cap: None, final_below: Some(eps) };
        let r = optimize_lengths(&model, 3, 20, 2, c).unwrap();
        assert!(r.increments.iter().sum::<usize>() >= need);
        let capped = LengthConstraints { cap: Some(need - 1), final_below: Some(eps) };
        assert!(matches!(optimize_lengths(&model, 3, 20, 2, capped), Err(Error::Infeasible(_))));
        let r = optimize_lengths(&model, 3, 20, 2, LengthConstraints { cap: Some(30), final_below: None }).unwrap();
        assert!(r.increments.iter().sum::<usize>() <= 30);
    }

    #[test]
    fn estimates_from_simulation() {
        let k = 8;
        let ch = ChannelSpec::biawgn_db(2.0).unwrap();
        let opts = GridOptions { min_triggers: 20, max_trials: 4000, workers: 1 };
        let grid = estimate_retrans_grid(GeneratorSet::nu6(), k, ch, 1e-3, 1, 1, opts).unwrap();
        assert_eq!(grid.len(), 9);
        assert!(grid[0].p > 0.9);
        assert!(grid.last().unwrap().p < 0.5);
        let always = estimate_retrans_grid(GeneratorSet::nu6(), k, ch, 1.0, 1, 1, GridOptions { max_trials: 200, ..opts })
            .unwrap();
        assert!(always.iter().all(|g| g.p == 0.0));
    }
}
