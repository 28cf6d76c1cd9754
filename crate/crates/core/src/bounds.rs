//! Random-coding achievability bounds for VLF codes with stop feedback.
//!
//! All bounds use the threshold `gamma = log2((M - 1) / eps)` on the
//! accumulated information density, which keeps the error probability of
//! the random-coding scheme below `eps` without simulating competing
//! codewords. The average blocklength is then bounded by `E[tau]`, the mean
//! first-passage time of the information-density random walk over `gamma`.
//!
//! * [`wald_bound`] bounds `E[tau]` in closed form for channels whose
//!   single-letter information density is bounded above by `B`:
//!   `E[tau] <= (gamma + B) / C`.
//! * [`mc_bound`] estimates `E[tau]` directly by simulating walks.
//! * [`repeat_after_n_bound`] restarts the walk every `N` symbols, so
//!   `E[tau] = sum_{n<N} P[tau > n] / (1 - P[tau > N])`.
//! * [`m_transmission_bound`] additionally only lets the walk stop at the
//!   decode points `N_1 < ... < N_m`, giving
//!   `E[tau] = sum_{i<m} I_{i+1} P[tau > N_i] / (1 - P[tau > N_m])` with `N_0 = 0`.
//!
//! Monte-Carlo walks are grouped into fixed chunks, each drawing from its
//! own stream, so results depend only on the seed.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSpec;
use crate::error::{Error, Result};
use crate::punctures::cumulative;
use crate::rng::stream_rng;

pub const DEFAULT_WALKS: u64 = 100_000;

const WALK_DOMAIN: &str = "vlf/bound-walk";
const WALKS_PER_CHUNK: u64 = 4096;
/// Safety cap on an unrestricted walk; with positive drift it is never reached
/// in practice.
const MAX_WALK_STEPS: u64 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    /// Closed form from Wald's equality.
    Wald,
    /// Simulated first passage, decoding after every symbol.
    MonteCarlo,
    /// Simulated first passage, walk restarted every `N` symbols.
    RepeatAfterN,
    /// Simulated first passage restricted to a decode grid.
    MTransmission,
}

impl BoundMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundMethod::Wald => "wald",
            BoundMethod::MonteCarlo => "monte-carlo",
            BoundMethod::RepeatAfterN => "repeat-after-n",
            BoundMethod::MTransmission => "m-transmission",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub k: usize,
    pub epsilon: f64,
    /// Upper bound on the average blocklength, in channel uses.
    pub ell: f64,
    /// Monte-Carlo standard error of `ell` (zero for closed forms).
    pub ell_stderr: f64,
    /// `k / ell`, bits per channel use.
    pub rate: f64,
    pub gamma: f64,
    pub method: BoundMethod,
    /// Cumulative decode points, empty when decoding after every symbol
    /// without repetition.
    pub decode_points: Vec<usize>,
}

impl BoundPoint {
    fn new(k: usize, epsilon: f64, ell: f64, ell_stderr: f64, gamma: f64, method: BoundMethod) -> Self {
        BoundPoint { k, epsilon, ell, ell_stderr, rate: k as f64 / ell, gamma, method, decode_points: Vec::new() }
    }
}

/// `log2(M - 1)` for `M = 2^k`, accurate for large `k`.
pub fn log2_m_minus_one(k: usize) -> f64 {
    if k >= 64 {
        // 2^-k is below f64 resolution relative to k.
        return k as f64;
    }
    let m1 = (1u64 << k) - 1;
    if m1 == 0 {
        f64::NEG_INFINITY
    } else {
        (m1 as f64).log2()
    }
}

/// `gamma = log2((M - 1) / eps)`.
pub fn threshold(k: usize, epsilon: f64) -> Result<f64> {
    check_args(k, epsilon)?;
    Ok(log2_m_minus_one(k) - epsilon.log2())
}

fn check_args(k: usize, epsilon: f64) -> Result<()> {
    if k == 0 {
        return Err(Error::Parameter("k must be positive".into()));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Parameter(format!("epsilon {epsilon} outside (0, 1]")));
    }
    Ok(())
}

fn check_channel(spec: &ChannelSpec) -> Result<f64> {
    let c = spec.capacity();
    if c <= 0.0 {
        return Err(Error::BoundHypothesis(format!("{spec} has zero capacity")));
    }
    Ok(c)
}

/// `ell = (log2(M-1) + log2(1/eps) + B) / C`.
pub fn wald_bound(spec: &ChannelSpec, k: usize, epsilon: f64) -> Result<BoundPoint> {
    let gamma = threshold(k, epsilon)?;
    let c = check_channel(spec)?;
    let b = spec.info_density_bound();
    if !b.is_finite() {
        return Err(Error::BoundHypothesis("information density is unbounded".into()));
    }
    let ell = (gamma.max(0.0) + b) / c;
    Ok(BoundPoint::new(k, epsilon, ell, 0.0, gamma, BoundMethod::Wald))
}

/// Survival function of the first-passage time, `P[tau > n]` for
/// `n = 0..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauTail {
    pub tails: Vec<f64>,
    pub stderr: Vec<f64>,
    pub walks: u64,
}

/// Simulates `walks` information-density walks of `horizon` steps and
/// estimates `P[tau > n]`.
///
/// Fails when the horizon is too short to see most walks pass the threshold.
pub fn mc_tau_tail(spec: &ChannelSpec, gamma: f64, horizon: usize, walks: u64, seed: u64) -> Result<TauTail> {
    let points: Vec<usize> = (1..=horizon).collect();
    let stats = grid_walks(spec, gamma, &points, walks, seed)?;
    let w = walks as f64;
    let mut tails = vec![if gamma > 0.0 { 1.0 } else { 0.0 }];
    tails.extend(stats.survive.iter().map(|&s| s as f64 / w));
    let stderr = tails.iter().map(|&p| (p * (1.0 - p) / w).sqrt()).collect();
    if horizon > 0 && tails[horizon] > 0.5 {
        return Err(Error::BoundHypothesis(format!(
            "horizon {horizon} too short: P[tau > horizon] = {:.3}",
            tails[horizon]
        )));
    }
    Ok(TauTail { tails, stderr, walks })
}

/// Mean and standard error of the unrestricted first-passage time.
pub fn mc_expected_tau(spec: &ChannelSpec, gamma: f64, walks: u64, seed: u64) -> Result<(f64, f64)> {
    check_channel(spec)?;
    if walks == 0 {
        return Err(Error::Parameter("need at least one walk".into()));
    }
    if gamma <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let chunks = walks.div_ceil(WALKS_PER_CHUNK);
    let parts: Vec<Result<(u64, u128)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(WALK_DOMAIN, seed, c);
            let count = WALKS_PER_CHUNK.min(walks - c * WALKS_PER_CHUNK);
            let (mut sum, mut sq) = (0u64, 0u128);
            for _ in 0..count {
                let mut s = 0.0;
                let mut n = 0u64;
                while s < gamma {
                    s += spec.info_density_step(&mut rng);
                    n += 1;
                    if n > MAX_WALK_STEPS {
                        return Err(Error::BoundHypothesis("walk did not reach the threshold".into()));
                    }
                }
                sum += n;
                sq += u128::from(n) * u128::from(n);
            }
            Ok((sum, sq))
        })
        .collect();
    let (mut sum, mut sq) = (0u64, 0u128);
    for p in parts {
        let (a, b) = p?;
        sum += a;
        sq += b;
    }
    let w = walks as f64;
    let mean = sum as f64 / w;
    let var = (sq as f64 / w - mean * mean).max(0.0) * w / (w - 1.0).max(1.0);
    Ok((mean, (var / w).sqrt()))
}

/// Simulated `E[tau]` with decoding after every symbol and no repetition.
pub fn mc_bound(spec: &ChannelSpec, k: usize, epsilon: f64, walks: u64, seed: u64) -> Result<BoundPoint> {
    let gamma = threshold(k, epsilon)?;
    let (ell, se) = mc_expected_tau(spec, gamma, walks, seed)?;
    Ok(BoundPoint::new(k, epsilon, ell, se, gamma, BoundMethod::MonteCarlo))
}

/// Bound for codes that repeat after `n` symbols and decode after every symbol.
pub fn repeat_after_n_bound(
    spec: &ChannelSpec,
    k: usize,
    epsilon: f64,
    n: usize,
    walks: u64,
    seed: u64,
) -> Result<BoundPoint> {
    let points: Vec<usize> = (1..=n).collect();
    let mut p = grid_bound(spec, k, epsilon, &points, walks, seed)?;
    p.method = BoundMethod::RepeatAfterN;
    Ok(p)
}

/// Bound for codes that repeat after `N_m` symbols and decode only after
/// transmissions of the given lengths `I_1, ..., I_m`.
pub fn m_transmission_bound(
    spec: &ChannelSpec,
    k: usize,
    epsilon: f64,
    increments: &[usize],
    walks: u64,
    seed: u64,
) -> Result<BoundPoint> {
    if increments.is_empty() || increments.contains(&0) {
        return Err(Error::Parameter(format!("transmission lengths must be positive, got {increments:?}")));
    }
    let points = cumulative(increments);
    let mut p = grid_bound(spec, k, epsilon, &points, walks, seed)?;
    p.method = BoundMethod::MTransmission;
    Ok(p)
}

fn grid_bound(
    spec: &ChannelSpec,
    k: usize,
    epsilon: f64,
    points: &[usize],
    walks: u64,
    seed: u64,
) -> Result<BoundPoint> {
    let gamma = threshold(k, epsilon)?;
    if gamma <= 0.0 {
        return Err(Error::BoundHypothesis("threshold must be positive".into()));
    }
    let stats = grid_walks(spec, gamma, points, walks, seed)?;
    let w = walks as f64;
    let fails = *stats.survive.last().expect("non-empty grid");
    if fails == walks {
        return Err(Error::BoundHypothesis(format!(
            "no walk passed the threshold within {} symbols",
            points.last().copied().unwrap_or(0)
        )));
    }
    // Per walk: a = symbols spent in the first block, b = 1 if it failed.
    let a_mean = stats.a_sum as f64 / w;
    let q = fails as f64 / w;
    let ell = a_mean / (1.0 - q);

    let n1 = (w - 1.0).max(1.0);
    let var_a = (stats.a_sq as f64 - w * a_mean * a_mean) / n1;
    let var_b = (fails as f64 - w * q * q) / n1;
    let cov = (stats.ab_sum as f64 - w * a_mean * q) / n1;
    let g0 = 1.0 / (1.0 - q);
    let g1 = a_mean / ((1.0 - q) * (1.0 - q));
    let var = (g0 * g0 * var_a + 2.0 * g0 * g1 * cov + g1 * g1 * var_b).max(0.0) / w;

    let mut p = BoundPoint::new(k, epsilon, ell, var.sqrt(), gamma, BoundMethod::MTransmission);
    p.decode_points = points.to_vec();
    Ok(p)
}

#[derive(Debug, Default, Clone)]
struct GridStats {
    /// Walks that have not passed by each grid point.
    survive: Vec<u64>,
    a_sum: u64,
    a_sq: u64,
    /// Sum of `a * b`, i.e. of `N_m` over failed walks.
    ab_sum: u64,
}

impl GridStats {
    fn merge(&mut self, o: &GridStats) {
        for (s, t) in self.survive.iter_mut().zip(&o.survive) {
            *s += t;
        }
        self.a_sum += o.a_sum;
        self.a_sq += o.a_sq;
        self.ab_sum += o.ab_sum;
    }
}

/// Runs walks of `N_m` steps and checks the threshold only at `points`.
///
/// Every walk draws all `N_m` steps even after passing, so walks with the
/// same seed are coupled across grids sharing `N_m`.
fn grid_walks(spec: &ChannelSpec, gamma: f64, points: &[usize], walks: u64, seed: u64) -> Result<GridStats> {
    check_channel(spec)?;
    if walks == 0 {
        return Err(Error::Parameter("need at least one walk".into()));
    }
    if points.is_empty() || points.windows(2).any(|w| w[0] >= w[1]) || points[0] == 0 {
        return Err(Error::Parameter(format!("decode points must increase from 1, got {points:?}")));
    }
    let horizon = *points.last().expect("non-empty");
    let chunks = walks.div_ceil(WALKS_PER_CHUNK);
    let parts: Vec<GridStats> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(WALK_DOMAIN, seed, c);
            let count = WALKS_PER_CHUNK.min(walks - c * WALKS_PER_CHUNK);
            let mut st = GridStats { survive: vec![0; points.len()], ..Default::default() };
            for _ in 0..count {
                let passed = walk(spec, gamma, points, horizon, &mut rng);
                let a = match passed {
                    Some(j) => points[j],
                    None => horizon,
                } as u64;
                let upto = passed.unwrap_or(points.len());
                st.survive[..upto].iter_mut().for_each(|s| *s += 1);
                st.a_sum += a;
                st.a_sq += a * a;
                if passed.is_none() {
                    st.ab_sum += a;
                }
            }
            st
        })
        .collect();
    let mut total = GridStats { survive: vec![0; points.len()], ..Default::default() };
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

/// Index of the first grid point at which the walk is at or above `gamma`.
fn walk<R: Rng + ?Sized>(spec: &ChannelSpec, gamma: f64, points: &[usize], horizon: usize, rng: &mut R) -> Option<usize> {
    let mut s = 0.0;
    let mut next = 0;
    let mut passed = None;
    for n in 1..=horizon {
        s += spec.info_density_step(rng);
        if passed.is_none() && n == points[next] {
            // gamma <= 0 means tau = 0; it is reported at the first point.
            if s >= gamma || gamma <= 0.0 {
                passed = Some(next);
            }
            next += 1;
        }
    }
    passed
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bsc() -> ChannelSpec {
        ChannelSpec::bsc(0.05).unwrap()
    }

    #[test]
    fn wald_by_hand() {
        let p = wald_bound(&bsc(), 32, 1e-3).unwrap();
        let c = 1.0 - crate::channel::binary_entropy(0.05);
        let want = ((2f64.powi(32) - 1.0).log2() + 1e3f64.log2() + 1.9f64.log2()) / c;
        assert!(((p.ell - want) / want).abs() < 1e-12);
        assert!((p.ell - 60.1).abs() < 0.05, "{}", p.ell);
        assert!((p.rate - 0.532).abs() < 1e-3);
        assert!(p.rate <= c);
    }

    #[test]
    fn wald_limits() {
        let awgn = ChannelSpec::biawgn_db(2.0).unwrap();
        let c = awgn.capacity();
        let p = wald_bound(&awgn, 16, 1.0).unwrap();
        assert!(((p.ell - ((2f64.powi(16) - 1.0).log2() + 1.0) / c) / p.ell).abs() < 1e-12);
        assert!(wald_bound(&ChannelSpec::bsc(0.5).unwrap(), 8, 1e-3).is_err());
        assert!(wald_bound(&bsc(), 8, 0.0).is_err());
        assert!(wald_bound(&bsc(), 0, 0.1).is_err());
    }

    #[test]
    fn zero_threshold_stops_immediately() {
        let t = mc_tau_tail(&bsc(), 0.0, 20, 1000, 1).unwrap();
        assert!(t.tails.iter().all(|&p| p == 0.0));
        assert_eq!(mc_expected_tau(&bsc(), 0.0, 10, 1).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn bsc_passage_needs_gamma_over_b_steps() {
        let gamma = 20.0;
        let t = mc_tau_tail(&bsc(), gamma, 120, 5000, 2).unwrap();
        let min_steps = (gamma / bsc().info_density_bound()).ceil() as usize;
        for n in 0..min_steps {
            assert_eq!(t.tails[n], 1.0, "n = {n}");
        }
        assert!(t.tails.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn short_horizon_is_flagged() {
        assert!(mc_tau_tail(&bsc(), 40.0, 10, 100, 0).is_err());
        assert!(repeat_after_n_bound(&bsc(), 32, 1e-3, 10, 100, 0).is_err());
    }

    #[test]
    fn monte_carlo_respects_wald() {
        for spec in [bsc(), ChannelSpec::biawgn_db(2.0).unwrap()] {
            for k in [8, 32] {
                let w = wald_bound(&spec, k, 1e-3).unwrap();
                let m = mc_bound(&spec, k, 1e-3, 20_000, 3).unwrap();
                assert!(m.ell <= w.ell + 3.0 * m.ell_stderr, "{spec} k={k}: {} vs {}", m.ell, w.ell);
            }
        }
    }

    #[test]
    fn unit_increments_equal_repeat_after_n() {
        let n = 96;
        let a = repeat_after_n_bound(&bsc(), 32, 1e-3, n, 20_000, 4).unwrap();
        let b = m_transmission_bound(&bsc(), 32, 1e-3, &vec![1; n], 20_000, 4).unwrap();
        assert_eq!(a.ell, b.ell);
        assert_eq!(a.ell_stderr, b.ell_stderr);
        assert_eq!(a.method, BoundMethod::RepeatAfterN);
        assert_eq!(b.method, BoundMethod::MTransmission);
    }

    #[test]
    fn single_transmission() {
        let spec = ChannelSpec::biawgn_db(2.0).unwrap();
        let gamma = threshold(16, 1e-3).unwrap();
        let stats = grid_walks(&spec, gamma, &[48], 10_000, 5).unwrap();
        let q = stats.survive[0] as f64 / 10_000.0;
        let p = m_transmission_bound(&spec, 16, 1e-3, &[48], 10_000, 5).unwrap();
        assert!((p.ell - 48.0 / (1.0 - q)).abs() < 1e-9);
    }

    #[test]
    fn packets_cost_more_than_every_symbol() {
        let spec = ChannelSpec::biawgn_db(2.0).unwrap();
        let every = repeat_after_n_bound(&spec, 16, 1e-3, 48, 20_000, 6).unwrap();
        let packets = m_transmission_bound(&spec, 16, 1e-3, &[30, 3, 3, 5, 7], 20_000, 6).unwrap();
        assert!(packets.ell >= every.ell);
        assert!(every.rate <= spec.capacity());
    }

    #[test]
    fn deterministic_in_seed() {
        let a = repeat_after_n_bound(&bsc(), 16, 1e-3, 48, 9000, 7).unwrap();
        let b = repeat_after_n_bound(&bsc(), 16, 1e-3, 48, 9000, 7).unwrap();
        let c = repeat_after_n_bound(&bsc(), 16, 1e-3, 48, 9000, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.ell, c.ell);
    }
}
