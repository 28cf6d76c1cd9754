//! Rate-compatible pseudo-random puncturing.
//!
//! A schedule is one fixed permutation of the `N` mother-code positions.
//! Sending symbols in that order means the first `n` transmitted symbols are
//! always a prefix of the order, so every higher-rate code is nested inside
//! the lower-rate ones. Decoding is attempted only at the listed cumulative
//! lengths `N_1 < ... < N_m`; after `N_m` symbols the transmitter starts the
//! same sequence over.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{fisher_yates, stream_rng};

const SCHEDULE_DOMAIN: &str = "vlf/puncture-order";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmissionSchedule {
    mother_len: usize,
    order: Vec<usize>,
    decode_points: Vec<usize>,
    seed: u64,
}

impl TransmissionSchedule {
    /// Permutation of `0..mother_len` drawn from `seed`, with the given
    /// cumulative decode points.
    pub fn new(mother_len: usize, seed: u64, decode_points: Vec<usize>) -> Result<Self> {
        if mother_len == 0 {
            return Err(Error::Schedule("mother code length is zero".into()));
        }
        validate_points(&decode_points, mother_len)?;
        let mut order: Vec<usize> = (0..mother_len).collect();
        fisher_yates(&mut stream_rng(SCHEDULE_DOMAIN, seed, mother_len as u64), &mut order);
        Ok(TransmissionSchedule { mother_len, order, decode_points, seed })
    }

    /// Decode after every symbol, repeating after the whole mother codeword.
    pub fn every_symbol(mother_len: usize, seed: u64) -> Result<Self> {
        Self::new(mother_len, seed, (1..=mother_len).collect())
    }

    /// Decode points from incremental lengths `I_1, ..., I_m`.
    pub fn from_increments(mother_len: usize, seed: u64, increments: &[usize]) -> Result<Self> {
        Self::new(mother_len, seed, cumulative(increments))
    }

    /// Same permutation, different decode points.
    pub fn with_decode_points(&self, decode_points: Vec<usize>) -> Result<Self> {
        validate_points(&decode_points, self.mother_len)?;
        Ok(TransmissionSchedule { decode_points, ..self.clone() })
    }

    pub fn mother_len(&self) -> usize {
        self.mother_len
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn decode_points(&self) -> &[usize] {
        &self.decode_points
    }

    /// Block length `N_m` after which transmission repeats.
    pub fn period(&self) -> usize {
        *self.decode_points.last().expect("validated non-empty")
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn increments(&self) -> Vec<usize> {
        let mut prev = 0;
        self.decode_points
            .iter()
            .map(|&p| {
                let inc = p - prev;
                prev = p;
                inc
            })
            .collect()
    }

    /// Mother-code position carried by global symbol `n >= 1`.
    ///
    /// With `n = sN + r`, `r` in `1..=N`, this is `order[r - 1]`, so symbols
    /// past the end of the mother codeword repeat from the start.
    pub fn symbol_at(&self, n: usize) -> usize {
        assert!(n >= 1, "symbol indices start at 1");
        self.order[(n - 1) % self.mother_len]
    }

    /// True when the stopping grid `{N_1, ..., N_m, N_m + N_1, ...}` contains `tau`.
    pub fn on_grid(&self, tau: usize) -> bool {
        if tau == 0 {
            return false;
        }
        let period = self.period();
        let r = (tau - 1) % period + 1;
        self.decode_points.binary_search(&r).is_ok()
    }
}

/// Free-function form of [`TransmissionSchedule::new`].
pub fn make_schedule(mother_len: usize, seed: u64, decode_points: Vec<usize>) -> Result<TransmissionSchedule> {
    TransmissionSchedule::new(mother_len, seed, decode_points)
}

/// Free-function form of [`TransmissionSchedule::symbol_at`].
pub fn symbol_at(schedule: &TransmissionSchedule, n: usize) -> usize {
    schedule.symbol_at(n)
}

pub fn cumulative(increments: &[usize]) -> Vec<usize> {
    increments
        .iter()
        .scan(0usize, |acc, &i| {
            *acc += i;
            Some(*acc)
        })
        .collect()
}

fn validate_points(points: &[usize], mother_len: usize) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Schedule("no decode points".into()));
    }
    let mut prev = 0;
    for &p in points {
        if p <= prev {
            return Err(Error::Schedule(format!(
                "decode points must increase strictly from 1, got {p} after {prev}"
            )));
        }
        prev = p;
    }
    if prev > mother_len {
        return Err(Error::Schedule(format!(
            "last decode point {prev} exceeds mother length {mother_len}"
        )));
    }
    Ok(())
}
