//! Maximum-likelihood decoding with exact word posteriors.
//!
//! Received symbols enter as LLRs `ln P(y|0) - ln P(y|1)` at their mother-code
//! positions; punctured (unsent) positions carry LLR 0. Up to a constant that
//! cancels in every ratio, the log-likelihood of a codeword `x` is
//! `sum_i (1 - 2 x_i) llr_i / 2`, which is the `ml_metric` reported here.
//!
//! The posterior of the decoded word is `L(w_hat) / sum_w L(w)` over the whole
//! codebook. The numerator comes from a max-product (Viterbi) recursion and
//! the denominator from a sum-product recursion over the same trellis, kept in
//! scaled linear arithmetic with per-stage renormalization. For tail-biting
//! codes both recursions are run once per start state, constrained to end in
//! the same state.
//!
//! Ties between codewords of equal likelihood go to the lexicographically
//! smallest message (bit 0 compared first).

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::trellis::{TerminationMode, Trellis, OUTPUTS_PER_BIT};

/// Relative tolerance under which two path metrics count as tied.
const TIE_REL: f64 = 1e-9;

/// Largest message length [`brute_force_map`] will enumerate.
pub const BRUTE_FORCE_MAX_K: usize = 14;

#[inline]
fn tied(a: f64, b: f64) -> bool {
    a.is_finite() && b.is_finite() && (a - b).abs() <= TIE_REL * (1.0 + a.abs().max(b.abs()))
}

/// `ln(e^a + e^b)`.
#[inline]
fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// Decoded word with its exact posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub msg_hat: Vec<u8>,
    /// `P(W = msg_hat | y)` under equiprobable messages.
    pub posterior: f64,
    /// Log-likelihood of the decoded codeword, relative to the all-erasure reference.
    pub ml_metric: f64,
}

/// Result of testing the decoded word's posterior against a threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    /// True when the posterior of the ML word is at least the threshold.
    pub accept: bool,
    /// The ML word. Always present when `accept` holds.
    pub msg_hat: Option<Vec<u8>>,
    /// Interval known to contain the exact posterior of `msg_hat`.
    pub posterior_lo: f64,
    pub posterior_hi: f64,
    /// Number of full trellis passes spent.
    pub passes: usize,
}

/// Per-stage output-triple metrics for an LLR vector.
fn stage_metrics(llrs: &[f64], stages: usize, metric: &mut Vec<[f64; 8]>) {
    metric.clear();
    for t in 0..stages {
        let a = 0.5 * llrs[OUTPUTS_PER_BIT * t];
        let b = 0.5 * llrs[OUTPUTS_PER_BIT * t + 1];
        let c = 0.5 * llrs[OUTPUTS_PER_BIT * t + 2];
        let mut row = [0.0; 8];
        for (o, slot) in row.iter_mut().enumerate() {
            let sa = if o & 1 == 0 { a } else { -a };
            let sb = if o & 2 == 0 { b } else { -b };
            let sc = if o & 4 == 0 { c } else { -c };
            *slot = sa + sb + sc;
        }
        metric.push(row);
    }
}

/// Reusable decoder for one code, message length and termination mode.
///
/// Holds all scratch space, so repeated decoding does not allocate.
#[derive(Debug, Clone)]
pub struct Decoder {
    trellis: Trellis,
    k: usize,
    mode: TerminationMode,
    stages: usize,
    lexicographic: bool,
    metric: Vec<[f64; 8]>,
    weight: Vec<[f64; 8]>,
    weight_offset: f64,
    cur_max: Vec<f64>,
    nxt_max: Vec<f64>,
    cur_sum: Vec<f64>,
    nxt_sum: Vec<f64>,
    ties: Vec<usize>,
    decisions: Vec<u8>,
    ub_max: Vec<f64>,
    ub_sum: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct PassResult {
    max: f64,
    log_sum: f64,
}

impl Decoder {
    pub fn new(trellis: &Trellis, k: usize, mode: TerminationMode) -> Result<Self> {
        let nu = trellis.memory();
        if k == 0 {
            return Err(Error::Parameter("message length must be positive".into()));
        }
        if mode == TerminationMode::TailBiting && k < nu {
            return Err(Error::MessageTooShort { len: k, memory: nu });
        }
        let stages = match mode {
            TerminationMode::Terminated => k + nu,
            TerminationMode::TailBiting => k,
        };
        let s = trellis.num_states();
        Ok(Decoder {
            trellis: trellis.clone(),
            k,
            mode,
            stages,
            lexicographic: true,
            metric: Vec::with_capacity(stages),
            weight: Vec::with_capacity(stages),
            weight_offset: 0.0,
            cur_max: vec![0.0; s],
            nxt_max: vec![0.0; s],
            cur_sum: vec![0.0; s],
            nxt_sum: vec![0.0; s],
            ties: Vec::new(),
            decisions: vec![0; stages * s],
            ub_max: vec![0.0; s],
            ub_sum: vec![0.0; s],
        })
    }

    /// Infers `k` from the LLR vector length.
    pub fn for_llrs(trellis: &Trellis, llrs: &[f64], mode: TerminationMode) -> Result<Self> {
        Self::new(trellis, message_len(trellis, llrs.len(), mode)?, mode)
    }

    /// Turns the lexicographic tie-break off. Ties are then resolved toward
    /// the path through predecessor bit 0, which is cheaper but depends on the
    /// trellis layout. Reliability-based stopping never accepts a tied word,
    /// so its decisions are unaffected.
    pub fn with_lexicographic_ties(mut self, on: bool) -> Self {
        self.lexicographic = on;
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> TerminationMode {
        self.mode
    }

    pub fn trellis(&self) -> &Trellis {
        &self.trellis
    }

    /// Mother codeword length this decoder expects.
    pub fn codeword_len(&self) -> usize {
        OUTPUTS_PER_BIT * self.stages
    }

    fn load(&mut self, llrs: &[f64]) -> Result<()> {
        if llrs.len() != self.codeword_len() {
            return Err(Error::LlrLength { len: llrs.len(), mode: self.mode.as_str() });
        }
        stage_metrics(llrs, self.stages, &mut self.metric);
        self.weight.clear();
        self.weight_offset = 0.0;
        for row in &self.metric {
            let c = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            self.weight_offset += c;
            self.weight.push(row.map(|m| (m - c).exp()));
        }
        Ok(())
    }

    #[inline]
    fn tail_stage(&self, t: usize) -> bool {
        self.mode == TerminationMode::Terminated && t >= self.k
    }

    /// One forward max-product step from `cur_max` into `nxt_max`, recording
    /// survivor bits for stage `t` when `record` is set.
    fn forward_max_stage(&mut self, t: usize, record: bool) {
        let s_count = self.trellis.num_states();
        let half = s_count >> 1;
        let tail = self.tail_stage(t);
        let outputs = self.trellis.outputs();
        let m = &self.metric[t];
        let lex = self.lexicographic && record;
        let row = &mut self.decisions[t * s_count..(t + 1) * s_count];
        for s in 0..s_count {
            if tail && s & 1 == 1 {
                self.nxt_max[s] = f64::NEG_INFINITY;
                row[s] = 0;
                continue;
            }
            let p0 = s >> 1;
            let p1 = p0 | half;
            let c0 = self.cur_max[p0] + m[outputs[s] as usize];
            let c1 = self.cur_max[p1] + m[outputs[s | s_count] as usize];
            let take1 = c1 > c0;
            self.nxt_max[s] = if take1 { c1 } else { c0 };
            row[s] = u8::from(take1);
            if lex && tied(c0, c1) {
                self.ties.push(s);
            }
        }
        std::mem::swap(&mut self.cur_max, &mut self.nxt_max);
        self.resolve_ties(t);
    }

    /// Re-decides the tied states of stage `t` in favour of the
    /// lexicographically smaller survivor.
    fn resolve_ties(&mut self, t: usize) {
        if self.ties.is_empty() {
            return;
        }
        let s_count = self.trellis.num_states();
        let half = s_count >> 1;
        let mut ties = std::mem::take(&mut self.ties);
        for &s in &ties {
            let p0 = s >> 1;
            let b = u8::from(self.survivor_less(t, p0 | half, p0));
            self.decisions[t * s_count + s] = b;
        }
        ties.clear();
        self.ties = ties;
    }

    /// Whether the survivor ending in `a` after `t` stages carries a
    /// lexicographically smaller message than the one ending in `b`.
    ///
    /// Both are walked back until they merge; below the merge point they
    /// share their prefix, so the earliest difference lies above it.
    fn survivor_less(&self, t: usize, mut a: usize, mut b: usize) -> bool {
        let s_count = self.trellis.num_states();
        let mut less = false;
        let mut tau = t;
        while a != b && tau > 0 {
            let (ua, ub) = (a & 1, b & 1);
            if ua != ub {
                less = ua < ub;
            }
            tau -= 1;
            let row = &self.decisions[tau * s_count..(tau + 1) * s_count];
            a = self.trellis.predecessor(a, row[a] as usize);
            b = self.trellis.predecessor(b, row[b] as usize);
        }
        less
    }

    /// One forward sum-product step; returns the log of the renormalization factor.
    fn forward_sum_stage(&mut self, t: usize) -> f64 {
        let s_count = self.trellis.num_states();
        let half = s_count >> 1;
        let tail = self.tail_stage(t);
        let outputs = self.trellis.outputs();
        let w = &self.weight[t];
        let mut peak = 0.0f64;
        for s in 0..s_count {
            if tail && s & 1 == 1 {
                self.nxt_sum[s] = 0.0;
                continue;
            }
            let p0 = s >> 1;
            let p1 = p0 | half;
            let v = self.cur_sum[p0] * w[outputs[s] as usize]
                + self.cur_sum[p1] * w[outputs[s | s_count] as usize];
            self.nxt_sum[s] = v;
            if v > peak {
                peak = v;
            }
        }
        std::mem::swap(&mut self.cur_sum, &mut self.nxt_sum);
        if peak > 0.0 {
            let inv = 1.0 / peak;
            self.cur_sum.iter_mut().for_each(|v| *v *= inv);
            peak.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Forward recursion from a single start state. Survivors are recorded;
    /// the result is read at `end`.
    fn constrained_pass(&mut self, start: usize, end: usize, want_sum: bool) -> PassResult {
        self.cur_max.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
        self.cur_max[start] = 0.0;
        if want_sum {
            self.cur_sum.iter_mut().for_each(|v| *v = 0.0);
            self.cur_sum[start] = 1.0;
        }
        let log_scale = self.run_forward(true, want_sum);
        let log_sum = if want_sum {
            let v = self.cur_sum[end];
            if v > 0.0 {
                v.ln() + log_scale + self.weight_offset
            } else {
                f64::NEG_INFINITY
            }
        } else {
            f64::NAN
        };
        PassResult { max: self.cur_max[end], log_sum }
    }

    /// Runs every stage forward from the current vectors and returns the
    /// accumulated log scale of the sum vector.
    fn run_forward(&mut self, record: bool, want_sum: bool) -> f64 {
        let lex = self.lexicographic && record;
        let s_count = self.trellis.num_states();
        let mut log_scale = 0.0;
        let mut inv = 1.0;
        let mut last_peak = 1.0f64;
        for t in 0..self.stages {
            if self.tail_stage(t) {
                if inv != 1.0 {
                    self.cur_sum.iter_mut().for_each(|v| *v *= inv);
                    inv = 1.0;
                    last_peak = 1.0;
                }
                self.forward_max_stage(t, record);
                if want_sum {
                    log_scale += self.forward_sum_stage(t);
                }
                continue;
            }
            let ties = if lex { Some(&mut self.ties) } else { None };
            let dec = &mut self.decisions[t * s_count..(t + 1) * s_count];
            if want_sum {
                let peak = fused_stage(
                    self.trellis.outputs(),
                    &self.metric[t],
                    &self.weight[t].map(|w| w * inv),
                    &self.cur_max,
                    &self.cur_sum,
                    &mut self.nxt_max,
                    &mut self.nxt_sum,
                    dec,
                    ties,
                );
                std::mem::swap(&mut self.cur_sum, &mut self.nxt_sum);
                if peak > 0.0 {
                    inv = 1.0 / peak;
                    log_scale += peak.ln();
                    last_peak = peak;
                } else {
                    return f64::NEG_INFINITY;
                }
            } else {
                max_stage(self.trellis.outputs(), &self.metric[t], &self.cur_max, &mut self.nxt_max, dec, ties);
            }
            std::mem::swap(&mut self.cur_max, &mut self.nxt_max);
            if lex {
                self.resolve_ties(t);
            }
        }
        // The last vector was never divided by its own peak.
        log_scale - last_peak.ln()
    }

    /// Message along the recorded survivors, tracing back from `end`.
    fn traceback(&self, end: usize) -> Vec<u8> {
        let s_count = self.trellis.num_states();
        let mut msg = vec![0u8; self.stages];
        let mut s = end;
        for t in (0..self.stages).rev() {
            msg[t] = (s & 1) as u8;
            let b = self.decisions[t * s_count + s] as usize;
            s = self.trellis.predecessor(s, b);
        }
        msg.truncate(self.k);
        msg
    }

    /// Free-start forward and free-end backward recursions, giving for each
    /// state `sigma` upper bounds on the best metric and on the log of the
    /// likelihood mass of the tail-biting paths through `sigma`.
    fn tailbiting_bounds(&mut self, want_sum: bool) {
        let s_count = self.trellis.num_states();
        // Forward with every start state allowed: paths ending in sigma.
        self.cur_max.iter_mut().for_each(|v| *v = 0.0);
        self.cur_sum.iter_mut().for_each(|v| *v = 1.0);
        let log_scale = self.run_forward(false, want_sum);
        for s in 0..s_count {
            self.ub_max[s] = self.cur_max[s];
            if want_sum {
                self.ub_sum[s] = self.cur_sum[s].ln() + log_scale + self.weight_offset;
            }
        }

        // Backward with every end state allowed: paths starting in sigma.
        let outputs = self.trellis.outputs();
        let mask = s_count - 1;
        self.cur_max.iter_mut().for_each(|v| *v = 0.0);
        self.cur_sum.iter_mut().for_each(|v| *v = 1.0);
        let mut log_scale = 0.0;
        for t in (0..self.stages).rev() {
            let m = &self.metric[t];
            let w = &self.weight[t];
            let mut peak = 0.0f64;
            for s in 0..s_count {
                let r0 = s << 1;
                let r1 = r0 | 1;
                let n0 = r0 & mask;
                let n1 = r1 & mask;
                let c0 = m[outputs[r0] as usize] + self.cur_max[n0];
                let c1 = m[outputs[r1] as usize] + self.cur_max[n1];
                self.nxt_max[s] = if c1 > c0 { c1 } else { c0 };
                if want_sum {
                    let v = w[outputs[r0] as usize] * self.cur_sum[n0]
                        + w[outputs[r1] as usize] * self.cur_sum[n1];
                    self.nxt_sum[s] = v;
                    if v > peak {
                        peak = v;
                    }
                }
            }
            std::mem::swap(&mut self.cur_max, &mut self.nxt_max);
            if want_sum {
                std::mem::swap(&mut self.cur_sum, &mut self.nxt_sum);
                if peak > 0.0 {
                    let inv = 1.0 / peak;
                    self.cur_sum.iter_mut().for_each(|v| *v *= inv);
                    log_scale += peak.ln();
                }
            }
        }
        for s in 0..s_count {
            self.ub_max[s] = self.ub_max[s].min(self.cur_max[s]);
            if want_sum {
                let back = self.cur_sum[s].ln() + log_scale + self.weight_offset;
                self.ub_sum[s] = self.ub_sum[s].min(back);
            }
        }
    }

    /// ML message and its metric.
    ///
    /// Tail-biting decoding searches start states in order of decreasing
    /// upper bound and stops once no remaining state can reach the best
    /// metric found, so the result is the exact tail-biting ML word.
    pub fn decode_ml(&mut self, llrs: &[f64]) -> Result<(Vec<u8>, f64)> {
        self.load(llrs)?;
        match self.mode {
            TerminationMode::Terminated => {
                let r = self.constrained_pass(0, 0, false);
                Ok((self.traceback(0), r.max))
            }
            TerminationMode::TailBiting => {
                self.tailbiting_bounds(false);
                let order = self.order_by(&self.ub_max);
                let mut best: Option<(f64, Vec<u8>)> = None;
                for sigma in order {
                    if let Some((b, _)) = &best {
                        if self.ub_max[sigma] < *b && !tied(self.ub_max[sigma], *b) {
                            break;
                        }
                    }
                    let r = self.constrained_pass(sigma, sigma, false);
                    self.offer(&mut best, r.max, sigma);
                }
                let (metric, msg) = best.expect("at least one start state searched");
                Ok((msg, metric))
            }
        }
    }

    /// Exact ML word and posterior. Tail-biting codes use one constrained
    /// pass per start state.
    pub fn decode(&mut self, llrs: &[f64]) -> Result<DecodeOutcome> {
        self.load(llrs)?;
        match self.mode {
            TerminationMode::Terminated => {
                let r = self.constrained_pass(0, 0, true);
                let msg_hat = self.traceback(0);
                Ok(outcome(msg_hat, r.max, r.log_sum))
            }
            TerminationMode::TailBiting => {
                let mut best: Option<(f64, Vec<u8>)> = None;
                let mut log_z = f64::NEG_INFINITY;
                for sigma in 0..self.trellis.num_states() {
                    let r = self.constrained_pass(sigma, sigma, true);
                    log_z = log_add(log_z, r.log_sum);
                    self.offer(&mut best, r.max, sigma);
                }
                let (metric, msg) = best.expect("at least one start state");
                Ok(outcome(msg, metric, log_z))
            }
        }
    }

    /// Decides whether the ML word's posterior reaches `threshold`.
    ///
    /// For tail-biting codes the start states are refined only until the
    /// decision is certain: the running bracket `[posterior_lo, posterior_hi]`
    /// always contains the exact posterior of the ML word, and once every
    /// start state has been processed it collapses to that value.
    pub fn decide(&mut self, llrs: &[f64], threshold: f64) -> Result<Decision> {
        if self.mode == TerminationMode::Terminated {
            let out = self.decode(llrs)?;
            let accept = out.posterior >= threshold;
            return Ok(Decision {
                accept,
                msg_hat: Some(out.msg_hat),
                posterior_lo: out.posterior,
                posterior_hi: out.posterior,
                passes: 1,
            });
        }
        self.load(llrs)?;
        self.tailbiting_bounds(true);
        let s_count = self.trellis.num_states();
        let by_max = self.order_by(&self.ub_max);
        let by_sum = self.order_by(&self.ub_sum);
        let mut done = vec![false; s_count];
        let (mut i_max, mut i_sum) = (0, 0);
        let mut best: Option<(f64, Vec<u8>)> = None;
        let mut log_zp = f64::NEG_INFINITY;
        let mut processed = 0usize;
        let mut passes = 2;
        // Bounds over all remaining start states at once, from the last set pass.
        let mut set_bound = PassResult { max: f64::INFINITY, log_sum: f64::INFINITY };
        let mut next_set_pass = 1usize;
        loop {
            while i_max < s_count && done[by_max[i_max]] {
                i_max += 1;
            }
            while i_sum < s_count && done[by_sum[i_sum]] {
                i_sum += 1;
            }
            let finished = processed == s_count;
            let rem_max = if finished {
                f64::NEG_INFINITY
            } else {
                self.ub_max[by_max[i_max]].min(set_bound.max)
            };
            let best_metric = best.as_ref().map_or(f64::NEG_INFINITY, |b| b.0);
            let search_open = !finished && (rem_max >= best_metric || tied(rem_max, best_metric));

            if best.is_some() {
                let log_r = (i_sum..s_count)
                    .map(|i| by_sum[i])
                    .filter(|&s| !done[s])
                    .fold(f64::NEG_INFINITY, |acc, s| log_add(acc, self.ub_sum[s]))
                    .min(set_bound.log_sum);
                let lo = (best_metric - log_add(log_zp, log_r)).exp().min(1.0);
                // An unprocessed ML word would add its own mass to the total.
                let mut hi = (best_metric - log_zp).exp().min(1.0);
                if search_open {
                    hi = hi.max((rem_max - log_add(log_zp, rem_max)).exp());
                }
                let exact = finished || log_r == f64::NEG_INFINITY;
                // Above one half the word is necessarily the ML word.
                let sure = lo >= threshold && (lo > 0.5 || !search_open);
                if sure || hi < threshold || exact {
                    let accept = sure || (exact && !search_open && lo >= threshold);
                    return Ok(Decision {
                        accept,
                        msg_hat: best.map(|b| b.1),
                        posterior_lo: lo,
                        posterior_hi: hi,
                        passes,
                    });
                }
                if processed >= next_set_pass {
                    set_bound = self.set_pass(&done);
                    passes += 1;
                    next_set_pass *= 2;
                    continue;
                }
            }
            let sigma = if search_open { by_max[i_max] } else { by_sum[i_sum] };
            let r = self.constrained_pass(sigma, sigma, true);
            passes += 1;
            processed += 1;
            done[sigma] = true;
            log_zp = log_add(log_zp, r.log_sum);
            self.offer(&mut best, r.max, sigma);
        }
    }

    /// Max and log-sum over all paths that start and end in states not yet
    /// `done`. Tail-biting paths through those states are a subset.
    fn set_pass(&mut self, done: &[bool]) -> PassResult {
        for (s, &d) in done.iter().enumerate() {
            self.cur_max[s] = if d { f64::NEG_INFINITY } else { 0.0 };
            self.cur_sum[s] = if d { 0.0 } else { 1.0 };
        }
        let log_scale = self.run_forward(false, true);
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for (s, &d) in done.iter().enumerate() {
            if !d {
                max = max.max(self.cur_max[s]);
                sum += self.cur_sum[s];
            }
        }
        let log_sum = if sum > 0.0 { sum.ln() + log_scale + self.weight_offset } else { f64::NEG_INFINITY };
        PassResult { max, log_sum }
    }

    /// Start states sorted by decreasing bound, ties by index.
    fn order_by(&self, bound: &[f64]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..bound.len()).collect();
        order.sort_by(|&a, &b| bound[b].total_cmp(&bound[a]).then(a.cmp(&b)));
        order
    }

    /// Replaces `best` with the survivor ending in `sigma` if it is better,
    /// or tied and lexicographically smaller.
    fn offer(&self, best: &mut Option<(f64, Vec<u8>)>, metric: f64, sigma: usize) {
        if metric == f64::NEG_INFINITY && best.is_some() {
            return;
        }
        let replace = match best {
            None => true,
            Some((b, msg)) => {
                if tied(metric, *b) {
                    self.traceback(sigma).cmp(msg) == Ordering::Less
                } else {
                    metric > *b
                }
            }
        };
        if replace {
            *best = Some((metric, self.traceback(sigma)));
        }
    }
}

/// Fused max-product and sum-product step over a full (non-tail) stage.
/// Returns the largest entry written to `nxt_sum`. States whose two
/// candidates tie are pushed onto `ties` when it is given.
#[allow(clippy::too_many_arguments)]
#[inline]
fn fused_stage(
    outputs: &[u8],
    m: &[f64; 8],
    w: &[f64; 8],
    cur_max: &[f64],
    cur_sum: &[f64],
    nxt_max: &mut [f64],
    nxt_sum: &mut [f64],
    dec: &mut [u8],
    mut ties: Option<&mut Vec<usize>>,
) -> f64 {
    let s_count = cur_max.len();
    let half = s_count / 2;
    let (out_lo, out_hi) = outputs.split_at(s_count);
    let (max_lo, max_hi) = cur_max.split_at(half);
    let (sum_lo, sum_hi) = cur_sum.split_at(half);
    let mut peak = [0.0f64; 2];
    let rows = nxt_max
        .chunks_exact_mut(2)
        .zip(nxt_sum.chunks_exact_mut(2))
        .zip(dec.chunks_exact_mut(2))
        .zip(out_lo.chunks_exact(2).zip(out_hi.chunks_exact(2)))
        .zip(max_lo.iter().zip(max_hi).zip(sum_lo.iter().zip(sum_hi)));
    for (p, ((((nm, ns), d), (o0, o1)), ((&a0, &a1), (&z0, &z1)))) in rows.enumerate() {
        for u in 0..2 {
            let i0 = (o0[u] & 7) as usize;
            let i1 = (o1[u] & 7) as usize;
            let c0 = a0 + m[i0];
            let c1 = a1 + m[i1];
            let take1 = c1 > c0;
            nm[u] = if take1 { c1 } else { c0 };
            d[u] = u8::from(take1);
            if let Some(list) = ties.as_deref_mut() {
                if tied(c0, c1) {
                    list.push(2 * p + u);
                }
            }
            let v = z0 * w[i0] + z1 * w[i1];
            ns[u] = v;
            if v > peak[u] {
                peak[u] = v;
            }
        }
    }
    peak[0].max(peak[1])
}

/// Max-product step over a full (non-tail) stage.
#[inline]
fn max_stage(
    outputs: &[u8],
    m: &[f64; 8],
    cur_max: &[f64],
    nxt_max: &mut [f64],
    dec: &mut [u8],
    mut ties: Option<&mut Vec<usize>>,
) {
    let s_count = cur_max.len();
    let half = s_count / 2;
    let (out_lo, out_hi) = outputs.split_at(s_count);
    let (max_lo, max_hi) = cur_max.split_at(half);
    let rows = nxt_max
        .chunks_exact_mut(2)
        .zip(dec.chunks_exact_mut(2))
        .zip(out_lo.chunks_exact(2).zip(out_hi.chunks_exact(2)))
        .zip(max_lo.iter().zip(max_hi));
    for (p, (((nm, d), (o0, o1)), (&a0, &a1))) in rows.enumerate() {
        for u in 0..2 {
            let c0 = a0 + m[(o0[u] & 7) as usize];
            let c1 = a1 + m[(o1[u] & 7) as usize];
            let take1 = c1 > c0;
            nm[u] = if take1 { c1 } else { c0 };
            d[u] = u8::from(take1);
            if let Some(list) = ties.as_deref_mut() {
                if tied(c0, c1) {
                    list.push(2 * p + u);
                }
            }
        }
    }
}

fn outcome(msg_hat: Vec<u8>, metric: f64, log_z: f64) -> DecodeOutcome {
    let posterior = (metric - log_z).exp().min(1.0);
    DecodeOutcome { msg_hat, posterior, ml_metric: metric }
}

/// Message length implied by a mother-codeword LLR vector.
pub fn message_len(trellis: &Trellis, len: usize, mode: TerminationMode) -> Result<usize> {
    let bad = || Error::LlrLength { len, mode: mode.as_str() };
    if len % OUTPUTS_PER_BIT != 0 {
        return Err(bad());
    }
    let stages = len / OUTPUTS_PER_BIT;
    match mode {
        TerminationMode::Terminated => stages
            .checked_sub(trellis.memory())
            .filter(|&k| k > 0)
            .ok_or_else(bad),
        TerminationMode::TailBiting if stages >= trellis.memory() && stages > 0 => Ok(stages),
        TerminationMode::TailBiting => Err(bad()),
    }
}

/// ML message and metric for the given termination mode.
pub fn viterbi(trellis: &Trellis, llrs: &[f64], mode: TerminationMode) -> Result<(Vec<u8>, f64)> {
    Decoder::for_llrs(trellis, llrs, mode)?.decode_ml(llrs)
}

/// Exact posterior decoding of a terminated code.
pub fn rova_terminated(trellis: &Trellis, llrs: &[f64]) -> Result<DecodeOutcome> {
    Decoder::for_llrs(trellis, llrs, TerminationMode::Terminated)?.decode(llrs)
}

/// Exact posterior decoding of a tail-biting code, one pass per start state.
pub fn rova_tailbiting(trellis: &Trellis, llrs: &[f64]) -> Result<DecodeOutcome> {
    Decoder::for_llrs(trellis, llrs, TerminationMode::TailBiting)?.decode(llrs)
}

/// Exhaustive MAP decoding over all `2^k` messages.
///
/// Each message is encoded and scored independently of the trellis
/// recursions, so this serves as the reference for the decoders above.
pub fn brute_force_map(trellis: &Trellis, llrs: &[f64], mode: TerminationMode) -> Result<DecodeOutcome> {
    let k = message_len(trellis, llrs.len(), mode)?;
    if k > BRUTE_FORCE_MAX_K {
        return Err(Error::EnumerationGuard { k, max: BRUTE_FORCE_MAX_K });
    }
    let gens = trellis.generators();
    let mut metrics = Vec::with_capacity(1 << k);
    let mut msg = vec![0u8; k];
    // Enumerate in lexicographic order: bit 0 is the most significant.
    for value in 0u32..(1 << k) {
        for (i, bit) in msg.iter_mut().enumerate() {
            *bit = ((value >> (k - 1 - i)) & 1) as u8;
        }
        let cw = gens.encode(&msg, mode)?;
        let metric: f64 = cw
            .chunks(OUTPUTS_PER_BIT)
            .zip(llrs.chunks(OUTPUTS_PER_BIT))
            .map(|(x, l)| {
                x.iter()
                    .zip(l)
                    .map(|(&xi, &li)| if xi == 0 { 0.5 * li } else { -0.5 * li })
                    .sum::<f64>()
            })
            .sum();
        metrics.push(metric);
    }
    let top = metrics.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let winner = metrics
        .iter()
        .position(|&m| m == top || tied(m, top))
        .expect("nonempty codebook");
    let log_z = top + metrics.iter().map(|&m| (m - top).exp()).sum::<f64>().ln();
    let msg_hat = (0..k).map(|i| ((winner >> (k - 1 - i)) & 1) as u8).collect();
    Ok(outcome(msg_hat, metrics[winner], log_z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trellis::GeneratorSet;
    use rand::Rng;

    fn toy() -> Trellis {
        Trellis::new(GeneratorSet::from_octal(2, ["7", "5", "7"]).unwrap())
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn zero_llrs_give_uniform_posterior() {
        let t = toy();
        let out = rova_terminated(&t, &[0.0; 3 * 6]).unwrap();
        assert!(close(out.posterior, 1.0 / 16.0));
        assert_eq!(out.ml_metric, 0.0);
        assert_eq!(out.msg_hat, vec![0; 4]);
        let out = rova_tailbiting(&t, &[0.0; 3 * 6]).unwrap();
        assert!(close(out.posterior, 1.0 / 64.0));
        assert_eq!(out.msg_hat, vec![0; 6]);
    }

    #[test]
    fn single_bit_message_by_hand() {
        let t = toy();
        // k = 1, terminated: codewords for 0 and 1 over 3 stages.
        let llrs = [0.8, -0.3, 1.1, 0.2, 0.0, -0.4, 0.5, 0.5, 0.5];
        let c1 = t.generators().encode(&[1], TerminationMode::Terminated).unwrap();
        let m1: f64 = c1.iter().zip(&llrs).map(|(&x, &l)| if x == 0 { l / 2.0 } else { -l / 2.0 }).sum();
        let m0: f64 = llrs.iter().sum::<f64>() / 2.0;
        let out = rova_terminated(&t, &llrs).unwrap();
        let (win, lose) = if m0 >= m1 { (m0, m1) } else { (m1, m0) };
        assert!(close(out.posterior, 1.0 / (1.0 + (lose - win).exp())));
        assert_eq!(out.msg_hat, vec![u8::from(m1 > m0)]);
    }

    #[test]
    fn extreme_llrs_give_certainty() {
        let t = Trellis::new(GeneratorSet::nu6());
        let msg = [1, 0, 1, 1, 0, 0, 1, 0, 1, 1];
        for mode in [TerminationMode::Terminated, TerminationMode::TailBiting] {
            let cw = t.generators().encode(&msg, mode).unwrap();
            let llrs: Vec<f64> = cw.iter().map(|&b| if b == 0 { 1e3 } else { -1e3 }).collect();
            let out = Decoder::for_llrs(&t, &llrs, mode).unwrap().decode(&llrs).unwrap();
            assert_eq!(out.msg_hat, msg);
            assert!((1.0 - out.posterior).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_oracle_on_random_instances() {
        let mut rng = crate::rng::stream_rng("rova-unit", 0, 0);
        for gens in [
            GeneratorSet::from_octal(2, ["7", "5", "7"]).unwrap(),
            GeneratorSet::from_octal(3, ["13", "15", "17"]).unwrap(),
        ] {
            let t = Trellis::new(gens);
            for trial in 0..200 {
                let k = rng.random_range(3..=8);
                let scale = if trial % 2 == 0 { 1.0 } else { 4.0 };
                for mode in [TerminationMode::Terminated, TerminationMode::TailBiting] {
                    if mode == TerminationMode::TailBiting && k < t.memory() {
                        continue;
                    }
                    let n = t.generators().codeword_len(k, mode);
                    let llrs: Vec<f64> = (0..n)
                        .map(|_| if rng.random_bool(0.3) { 0.0 } else { scale * (rng.random::<f64>() - 0.4) })
                        .collect();
                    let fast = Decoder::for_llrs(&t, &llrs, mode).unwrap().decode(&llrs).unwrap();
                    let oracle = brute_force_map(&t, &llrs, mode).unwrap();
                    assert_eq!(fast.msg_hat, oracle.msg_hat, "{mode} {llrs:?}");
                    assert!(close(fast.posterior, oracle.posterior), "{} vs {}", fast.posterior, oracle.posterior);
                    assert!(close(fast.ml_metric, oracle.ml_metric));
                    let (ml, metric) = viterbi(&t, &llrs, mode).unwrap();
                    assert_eq!(ml, oracle.msg_hat);
                    assert!(close(metric, oracle.ml_metric));
                }
            }
        }
    }

    #[test]
    fn bsc_ties_resolve_lexicographically() {
        // Hard-decision LLRs with many punctures produce exact ties.
        let t = toy();
        let mut rng = crate::rng::stream_rng("rova-ties", 1, 0);
        for _ in 0..300 {
            let k = 6;
            for mode in [TerminationMode::Terminated, TerminationMode::TailBiting] {
                let n = t.generators().codeword_len(k, mode);
                let llrs: Vec<f64> = (0..n)
                    .map(|_| match rng.random_range(0..4) {
                        0 | 1 => 0.0,
                        2 => 2.0,
                        _ => -2.0,
                    })
                    .collect();
                let oracle = brute_force_map(&t, &llrs, mode).unwrap();
                let (ml, _) = viterbi(&t, &llrs, mode).unwrap();
                assert_eq!(ml, oracle.msg_hat, "{mode} {llrs:?}");
            }
        }
    }

    #[test]
    fn decide_brackets_exact_posterior() {
        let t = Trellis::new(GeneratorSet::from_octal(4, ["25", "33", "37"]).unwrap());
        let mut rng = crate::rng::stream_rng("rova-decide", 2, 0);
        let k = 12;
        let mut dec = Decoder::new(&t, k, TerminationMode::TailBiting).unwrap();
        for trial in 0..300 {
            let msg: Vec<u8> = (0..k).map(|_| rng.random_range(0..2)).collect();
            let cw = t.generators().encode(&msg, TerminationMode::TailBiting).unwrap();
            let sent = rng.random_range(k..=3 * k);
            let llrs: Vec<f64> = cw
                .iter()
                .enumerate()
                .map(|(i, &b)| {
                    if i >= sent {
                        0.0
                    } else {
                        let y = 1.0 - 2.0 * f64::from(b) + rng.random::<f64>() * 1.6 - 0.8;
                        2.0 * 1.6 * y
                    }
                })
                .collect();
            let exact = dec.decode(&llrs).unwrap();
            let threshold = [0.999, 0.9, 0.4][trial % 3];
            let d = dec.decide(&llrs, threshold).unwrap();
            assert_eq!(d.accept, exact.posterior >= threshold, "{exact:?} {d:?}");
            assert!(d.posterior_lo <= exact.posterior * (1.0 + 1e-9));
            assert!(d.posterior_hi >= exact.posterior * (1.0 - 1e-9));
            if d.accept {
                assert_eq!(d.msg_hat.unwrap(), exact.msg_hat);
            }
        }
    }

    #[test]
    fn rejects_bad_lengths() {
        let t = toy();
        assert!(rova_terminated(&t, &[0.0; 7]).is_err());
        assert!(rova_terminated(&t, &[0.0; 6]).is_err());
        assert!(rova_tailbiting(&t, &[0.0; 3]).is_err());
        assert!(matches!(
            brute_force_map(&t, &[0.0; 3 * 15], TerminationMode::TailBiting),
            Err(Error::EnumerationGuard { .. })
        ));
    }
}
