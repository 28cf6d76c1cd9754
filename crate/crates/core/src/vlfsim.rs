//! Decision-feedback simulation: single trials and Monte-Carlo campaigns.
//!
//! A trial draws a uniform message, sends mother-code symbols in schedule
//! order and tries to decode at every decode point. Each attempt uses only the
//! symbols of the current `N_m` block; once `N_m` symbols have gone by without
//! a stop, the block restarts from scratch with fresh noise.
//!
//! Campaigns run trials in fixed-size batches. Trial `i` always draws from
//! ChaCha stream `i` under the master seed, and batches are folded in trial
//! order, so the result does not depend on how many threads executed them.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::channel::ChannelSpec;
use crate::crc::{crc_append, crc_check, CrcPoly};
use crate::error::{Error, Result};
use crate::punctures::TransmissionSchedule;
use crate::rng::{stream_rng, GENERATOR_ID};
use crate::rova::Decoder;
use crate::trellis::{GeneratorSet, TerminationMode, Trellis};

const TRIAL_DOMAIN: &str = "vlf/trial";

/// When the receiver acknowledges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StopCriterion {
    /// Stop once the decoded word's posterior is at least `1 - epsilon`.
    Reliability { epsilon: f64 },
    /// Stop once the decoded word passes the CRC.
    Crc { poly: CrcPoly },
}

/// What happens after the last decode point of a block fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AfterFinal {
    /// Resend the same block (repeat-after-`N_m`).
    RepeatForever,
    /// Give up and declare an error (peak-latency mode).
    DeclareError,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingPolicy {
    pub criterion: StopCriterion,
    pub after_final: AfterFinal,
}

impl StoppingPolicy {
    pub fn reliability(epsilon: f64) -> Self {
        StoppingPolicy {
            criterion: StopCriterion::Reliability { epsilon },
            after_final: AfterFinal::RepeatForever,
        }
    }

    pub fn crc(poly: CrcPoly) -> Self {
        StoppingPolicy { criterion: StopCriterion::Crc { poly }, after_final: AfterFinal::RepeatForever }
    }

    pub fn declaring_errors(self) -> Self {
        StoppingPolicy { after_final: AfterFinal::DeclareError, ..self }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self.criterion {
            StopCriterion::Reliability { epsilon } => Some(epsilon),
            StopCriterion::Crc { .. } => None,
        }
    }

    /// Check bits added to the encoder input.
    pub fn check_bits(&self) -> usize {
        match self.criterion {
            StopCriterion::Reliability { .. } => 0,
            StopCriterion::Crc { poly } => poly.width(),
        }
    }

    /// Short label used in reports, e.g. `rb` or `crc-0x8810`.
    pub fn label(&self) -> String {
        let base = match self.criterion {
            StopCriterion::Reliability { .. } => "rb".to_string(),
            StopCriterion::Crc { poly } => format!("crc-{poly}"),
        };
        match self.after_final {
            AfterFinal::RepeatForever => base,
            AfterFinal::DeclareError => format!("{base}-peak"),
        }
    }
}

/// Everything that defines one simulated system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub code: GeneratorSet,
    pub mode: TerminationMode,
    /// Information bits per message (excluding CRC bits).
    pub k: usize,
    pub channel: ChannelSpec,
    pub policy: StoppingPolicy,
    pub schedule: TransmissionSchedule,
    /// Blocks after which a repeat-forever trial is abandoned.
    pub max_blocks: u32,
}

impl SystemSpec {
    pub const DEFAULT_MAX_BLOCKS: u32 = 1000;

    /// Number of encoder input bits, `k + A`.
    pub fn input_len(&self) -> usize {
        self.k + self.policy.check_bits()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Parameter("k must be positive".into()));
        }
        let n = self.code.codeword_len(self.input_len(), self.mode);
        if self.schedule.mother_len() != n {
            return Err(Error::Mismatch(format!(
                "schedule covers {} symbols but the {} mother code for {} input bits has {n}",
                self.schedule.mother_len(),
                self.mode,
                self.input_len()
            )));
        }
        if let StopCriterion::Reliability { epsilon } = self.policy.criterion {
            if !(epsilon > 0.0 && epsilon <= 1.0) {
                return Err(Error::Parameter(format!("epsilon {epsilon} outside (0, 1]")));
            }
        }
        if self.max_blocks == 0 {
            return Err(Error::Parameter("max_blocks must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialResult {
    /// Symbols sent until the trial ended.
    pub tau: u64,
    /// The receiver acknowledged (as opposed to declaring an error or giving up).
    pub stopped: bool,
    /// Acknowledged word equals the sent message.
    pub success: bool,
    pub declared_error: bool,
    /// Abandoned after `max_blocks` blocks.
    pub truncated: bool,
    pub blocks: u32,
    /// Per decode point, the number of blocks in which decoding there failed.
    pub nacks: Vec<u32>,
    pub decode_attempts: u32,
}

impl TrialResult {
    pub fn undetected_error(&self) -> bool {
        self.stopped && !self.success
    }
}

/// Runs trials of one system, reusing decoder buffers.
#[derive(Debug, Clone)]
pub struct Simulator {
    spec: SystemSpec,
    decoder: Decoder,
    llrs: Vec<f64>,
    threshold: f64,
    first_useful: usize,
}

impl Simulator {
    pub fn new(spec: SystemSpec) -> Result<Self> {
        spec.validate()?;
        let trellis = Trellis::new(spec.code);
        let crc_mode = matches!(spec.policy.criterion, StopCriterion::Crc { .. });
        let decoder = Decoder::new(&trellis, spec.input_len(), spec.mode)?.with_lexicographic_ties(crc_mode);
        let k_in = spec.input_len();
        let (threshold, first_useful) = match spec.policy.criterion {
            StopCriterion::Reliability { epsilon } => {
                let threshold = 1.0 - epsilon;
                // With n < k sent symbols every word shares its likelihood with
                // at least 2^(k-n) others, so its posterior is at most 2^(n-k).
                let first = (0..k_in)
                    .find(|&n| 2f64.powi(n as i32 - k_in as i32) >= threshold)
                    .unwrap_or(k_in);
                (threshold, first)
            }
            // Below k + A received symbols the ML word is not unique and the
            // check would only test the tie-break.
            StopCriterion::Crc { .. } => (1.0, k_in),
        };
        let llrs = vec![0.0; decoder.codeword_len()];
        Ok(Simulator { spec, decoder, llrs, threshold, first_useful })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    /// Smallest number of received symbols at which decoding can succeed.
    pub fn first_useful_len(&self) -> usize {
        self.first_useful
    }

    /// One trial driven by `rng` (message first, then channel noise).
    pub fn run_trial<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<TrialResult> {
        let k = self.spec.k;
        let msg: Vec<u8> = (0..k).map(|_| u8::from(rng.random::<bool>())).collect();
        let input = match self.spec.policy.criterion {
            StopCriterion::Crc { poly } => crc_append(&msg, &poly),
            StopCriterion::Reliability { .. } => msg.clone(),
        };
        let codeword = self.spec.code.encode(&input, self.spec.mode)?;
        let points = self.spec.schedule.decode_points().to_vec();
        let period = *points.last().expect("validated schedule") as u64;
        let mut result = TrialResult {
            tau: 0,
            stopped: false,
            success: false,
            declared_error: false,
            truncated: false,
            blocks: 0,
            nacks: vec![0; points.len()],
            decode_attempts: 0,
        };
        loop {
            result.blocks += 1;
            self.llrs.iter_mut().for_each(|l| *l = 0.0);
            let mut sent = 0usize;
            for (i, &point) in points.iter().enumerate() {
                while sent < point {
                    let pos = self.spec.schedule.order()[sent];
                    self.llrs[pos] = self.spec.channel.sample_llr(codeword[pos], rng);
                    sent += 1;
                }
                if point >= self.first_useful {
                    result.decode_attempts += 1;
                    if let Some(word) = self.try_decode()? {
                        result.tau = u64::from(result.blocks - 1) * period + point as u64;
                        result.stopped = true;
                        result.success = word[..k] == msg[..];
                        return Ok(result);
                    }
                }
                result.nacks[i] += 1;
            }
            if self.spec.policy.after_final == AfterFinal::DeclareError {
                result.tau = period;
                result.declared_error = true;
                return Ok(result);
            }
            if result.blocks >= self.spec.max_blocks {
                result.tau = u64::from(result.blocks) * period;
                result.truncated = true;
                return Ok(result);
            }
        }
    }

    /// The acknowledged word, or `None` for a retransmission request.
    fn try_decode(&mut self) -> Result<Option<Vec<u8>>> {
        match self.spec.policy.criterion {
            StopCriterion::Reliability { .. } => {
                let d = self.decoder.decide(&self.llrs, self.threshold)?;
                Ok(if d.accept { d.msg_hat } else { None })
            }
            StopCriterion::Crc { poly } => {
                let (word, _) = self.decoder.decode_ml(&self.llrs)?;
                Ok(crc_check(&word, &poly).then_some(word))
            }
        }
    }
}

/// Free-function form: one trial with the trial stream for `(seed, index)`.
pub fn run_trial(spec: &SystemSpec, seed: u64, index: u64) -> Result<TrialResult> {
    Simulator::new(spec.clone())?.run_trial(&mut trial_rng(seed, index))
}

pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    stream_rng(TRIAL_DOMAIN, seed, index)
}

/// Campaign stopping rule. A campaign ends at whichever limit is hit first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopRule {
    /// Stop once this many undetected errors have been seen.
    pub min_errors: Option<u64>,
    /// Stop once this many trials ended in a declared error.
    pub min_declared: Option<u64>,
    pub max_trials: u64,
}

impl StopRule {
    pub fn errors(min_errors: u64, max_trials: u64) -> Self {
        StopRule { min_errors: Some(min_errors), min_declared: None, max_trials }
    }

    pub fn trials(max_trials: u64) -> Self {
        StopRule { min_errors: None, min_declared: None, max_trials }
    }

    fn reached(&self, tally: &Tally) -> bool {
        tally.trials >= self.max_trials
            || self.min_errors.is_some_and(|n| tally.errors >= n)
            || self.min_declared.is_some_and(|n| tally.declared >= n)
    }
}

/// Integer sufficient statistics of a campaign.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub trials: u64,
    pub errors: u64,
    pub declared: u64,
    pub truncated: u64,
    pub blocks: u64,
    pub sum_tau: u128,
    pub sum_tau_sq: u128,
    pub nacks: Vec<u64>,
    pub decode_attempts: u64,
}

impl Tally {
    pub fn new(points: usize) -> Self {
        Tally { nacks: vec![0; points], ..Tally::default() }
    }

    pub fn add(&mut self, r: &TrialResult) {
        self.trials += 1;
        self.errors += u64::from(r.undetected_error());
        self.declared += u64::from(r.declared_error);
        self.truncated += u64::from(r.truncated);
        self.blocks += u64::from(r.blocks);
        self.sum_tau += u128::from(r.tau);
        self.sum_tau_sq += u128::from(r.tau) * u128::from(r.tau);
        for (acc, &n) in self.nacks.iter_mut().zip(&r.nacks) {
            *acc += u64::from(n);
        }
        self.decode_attempts += u64::from(r.decode_attempts);
    }
}

/// Resumable campaign progress: the tally and the next trial index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignState {
    pub seed: u64,
    pub next_trial: u64,
    pub tally: Tally,
}

impl CampaignState {
    pub fn new(seed: u64, points: usize) -> Self {
        CampaignState { seed, next_trial: 0, tally: Tally::new(points) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignOptions {
    pub stop: StopRule,
    /// Worker threads; 0 means rayon's default.
    pub workers: usize,
    pub batch: usize,
}

impl CampaignOptions {
    pub fn new(stop: StopRule) -> Self {
        CampaignOptions { stop, workers: 0, batch: 256 }
    }

    pub fn with_workers(self, workers: usize) -> Self {
        CampaignOptions { workers, ..self }
    }
}

/// Runs trials until the stop rule fires.
pub fn run_campaign(spec: &SystemSpec, opts: &CampaignOptions, seed: u64) -> Result<EstimatorReport> {
    let state = CampaignState::new(seed, spec.schedule.decode_points().len());
    let state = resume_campaign(spec, opts, state, |_| {})?;
    Ok(EstimatorReport::from_state(spec, &state, opts.stop))
}

/// Continues a campaign from `state`, calling `progress` after every batch.
pub fn resume_campaign<F: FnMut(&CampaignState)>(
    spec: &SystemSpec,
    opts: &CampaignOptions,
    mut state: CampaignState,
    mut progress: F,
) -> Result<CampaignState> {
    let template = Simulator::new(spec.clone())?;
    if state.tally.nacks.len() != spec.schedule.decode_points().len() {
        return Err(Error::Mismatch("checkpoint has a different number of decode points".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    let batch = opts.batch.max(1) as u64;
    while !opts.stop.reached(&state.tally) {
        let start = state.next_trial;
        let end = start + batch.min(opts.stop.max_trials - state.tally.trials);
        let seed = state.seed;
        let results: Vec<Result<TrialResult>> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map_init(|| template.clone(), |sim, i| sim.run_trial(&mut trial_rng(seed, i)))
                .collect()
        });
        for r in results {
            let r = r?;
            state.tally.add(&r);
            state.next_trial += 1;
            if opts.stop.reached(&state.tally) {
                break;
            }
        }
        progress(&state);
    }
    Ok(state)
}

/// Latency of a repeat-after-`N_m` schedule from its per-point NACK
/// probabilities `P(tau > N_i)` (per block) and increments `I_i`:
/// `(I_1 + sum_{i<m} I_{i+1} P_i) / (1 - P_m)`.
pub fn latency_from_nack(nack_prob: &[f64], increments: &[usize]) -> Result<f64> {
    if nack_prob.len() != increments.len() || increments.is_empty() {
        return Err(Error::Parameter("need one NACK probability per increment".into()));
    }
    let m = increments.len();
    let last = nack_prob[m - 1];
    if last >= 1.0 {
        return Err(Error::Divergent(last));
    }
    let num = increments[0] as f64
        + (0..m - 1).map(|i| increments[i + 1] as f64 * nack_prob[i]).sum::<f64>();
    Ok(num / (1.0 - last))
}

/// Expected symbols per block when decoding stops at the first ACK or after
/// the last point: `I_1 + sum_{i<m} I_{i+1} P_i`.
pub fn block_latency(nack_prob: &[f64], increments: &[usize]) -> f64 {
    increments[0] as f64
        + (0..increments.len() - 1).map(|i| increments[i + 1] as f64 * nack_prob[i]).sum::<f64>()
}

/// Two-sided normal-approximation interval for a proportion.
///
/// Returns `(lo, hi, degenerate)`; `degenerate` is set when `p_hat` is 0 or
/// 1, where the interval collapses to a point.
pub fn confidence_interval(p_hat: f64, trials: u64, level: f64) -> (f64, f64, bool) {
    assert!(trials >= 1, "interval needs at least one trial");
    assert!(level > 0.0 && level < 1.0, "confidence level must be in (0, 1)");
    let y = Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(0.5 + level / 2.0);
    let half = y * (p_hat * (1.0 - p_hat) / trials as f64).sqrt();
    let degenerate = p_hat <= 0.0 || p_hat >= 1.0;
    ((p_hat - half).max(0.0), (p_hat + half).min(1.0), degenerate)
}

/// Campaign estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub k: usize,
    pub trials: u64,
    pub errors: u64,
    pub declared: u64,
    pub truncated: u64,
    pub lambda_hat: f64,
    /// Sample standard deviation of `tau`.
    pub sigma_lambda_hat: f64,
    pub rt_hat: f64,
    pub pue_hat: f64,
    /// `sqrt(P(1 - P))`, the per-trial standard deviation of the error indicator.
    pub sigma_ue_hat: f64,
    pub ci_level: f64,
    pub ci: (f64, f64),
    pub ci_degenerate: bool,
    /// Per decode point, the fraction of blocks that were still unacknowledged there.
    pub nack_prob: Vec<f64>,
    /// Fraction of trials ending in a declared error.
    pub declared_rate: f64,
    pub master_seed: u64,
    pub generator: String,
    /// Stopped on `max_trials` before reaching the error target.
    pub partial: bool,
    pub decode_attempts: u64,
}

impl EstimatorReport {
    pub const CI_LEVEL: f64 = 0.95;

    pub fn from_state(spec: &SystemSpec, state: &CampaignState, stop: StopRule) -> Self {
        Self::from_tally(spec.k, &state.tally, state.seed, stop)
    }

    pub fn from_tally(k: usize, t: &Tally, seed: u64, stop: StopRule) -> Self {
        let s = t.trials.max(1) as f64;
        let lambda_hat = t.sum_tau as f64 / s;
        let mean_sq = t.sum_tau_sq as f64 / s;
        let sigma_lambda_hat = (mean_sq - lambda_hat * lambda_hat).max(0.0).sqrt();
        let pue_hat = t.errors as f64 / s;
        let (lo, hi, degenerate) = confidence_interval(pue_hat, t.trials.max(1), Self::CI_LEVEL);
        let blocks = t.blocks.max(1) as f64;
        let partial = stop.min_errors.is_some_and(|n| t.errors < n)
            || stop.min_declared.is_some_and(|n| t.declared < n);
        EstimatorReport {
            k,
            trials: t.trials,
            errors: t.errors,
            declared: t.declared,
            truncated: t.truncated,
            lambda_hat,
            sigma_lambda_hat,
            rt_hat: k as f64 * (1.0 - pue_hat) / lambda_hat,
            pue_hat,
            sigma_ue_hat: (pue_hat * (1.0 - pue_hat)).sqrt(),
            ci_level: Self::CI_LEVEL,
            ci: (lo, hi),
            ci_degenerate: degenerate,
            nack_prob: t.nacks.iter().map(|&n| n as f64 / blocks).collect(),
            declared_rate: t.declared as f64 / s,
            master_seed: seed,
            generator: GENERATOR_ID.to_string(),
            partial,
            decode_attempts: t.decode_attempts,
        }
    }

    /// Standard error of `lambda_hat` relative to itself.
    pub fn lambda_rel_stderr(&self) -> f64 {
        self.sigma_lambda_hat / ((self.trials as f64).sqrt() * self.lambda_hat)
    }
}
