//! Memoryless binary-input channels.
//!
//! The BI-AWGN channel maps bit `b` to `1 - 2b` and adds Gaussian noise of
//! variance `1 / snr`, so `snr` is the symbol SNR. All information measures
//! are in bits.

use std::f64::consts::LN_2;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// LLR magnitude used for a noiseless BSC, large enough to make any
/// disagreement decisive while keeping sums finite.
pub const NOISELESS_LLR: f64 = 1.0e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChannelSpec {
    Bsc { p: f64 },
    #[serde(rename = "biawgn")]
    BiAwgn { snr: f64 },
}

impl ChannelSpec {
    /// Binary symmetric channel with crossover `p` in `[0, 0.5]`.
    pub fn bsc(p: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&p) {
            return Err(Error::Channel(format!("crossover {p} outside [0, 0.5]")));
        }
        Ok(ChannelSpec::Bsc { p })
    }

    /// BI-AWGN channel with linear SNR.
    pub fn biawgn(snr: f64) -> Result<Self> {
        if !(snr > 0.0 && snr.is_finite()) {
            return Err(Error::Channel(format!("snr {snr} must be positive")));
        }
        Ok(ChannelSpec::BiAwgn { snr })
    }

    pub fn biawgn_db(snr_db: f64) -> Result<Self> {
        Self::biawgn(db_to_linear(snr_db))
    }

    pub fn name(&self) -> &'static str {
        match self {
            ChannelSpec::Bsc { .. } => "bsc",
            ChannelSpec::BiAwgn { .. } => "biawgn",
        }
    }

    /// Crossover probability or linear SNR.
    pub fn param(&self) -> f64 {
        match *self {
            ChannelSpec::Bsc { p } => p,
            ChannelSpec::BiAwgn { snr } => snr,
        }
    }

    /// Magnitude of the BSC LLR, `ln((1-p)/p)`.
    fn bsc_llr(p: f64) -> f64 {
        if p == 0.0 {
            NOISELESS_LLR
        } else {
            ((1.0 - p) / p).ln().min(NOISELESS_LLR)
        }
    }

    /// One channel use for input `bit`.
    pub fn observe<R: Rng + ?Sized>(&self, bit: u8, rng: &mut R) -> Observation {
        match *self {
            ChannelSpec::Bsc { p } => {
                let flip = p > 0.0 && rng.random::<f64>() < p;
                Observation::Bit((bit & 1) ^ u8::from(flip))
            }
            ChannelSpec::BiAwgn { snr } => {
                let noise: f64 = rng.sample(StandardNormal);
                Observation::Real(bpsk(bit) + noise / snr.sqrt())
            }
        }
    }

    /// One channel use, returned directly as an LLR.
    #[inline]
    pub fn sample_llr<R: Rng + ?Sized>(&self, bit: u8, rng: &mut R) -> f64 {
        self.observe(bit, rng).llr(self)
    }

    /// Capacity with equiprobable inputs, in bits per channel use.
    pub fn capacity(&self) -> f64 {
        match *self {
            ChannelSpec::Bsc { p } => 1.0 - binary_entropy(p),
            ChannelSpec::BiAwgn { snr } => biawgn_capacity(snr),
        }
    }

    /// Supremum of the single-letter information density, in bits.
    pub fn info_density_bound(&self) -> f64 {
        match *self {
            ChannelSpec::Bsc { p } => (2.0 * (1.0 - p)).log2(),
            ChannelSpec::BiAwgn { .. } => 1.0,
        }
    }

    /// Draws `(X, Y)` with `X` uniform and returns `i(X; Y)` in bits.
    pub fn info_density_step<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x: u8 = u8::from(rng.random::<bool>());
        match (*self, self.observe(x, rng)) {
            (ChannelSpec::Bsc { p }, Observation::Bit(y)) => {
                if y == x {
                    (2.0 * (1.0 - p)).log2()
                } else {
                    (2.0 * p).log2()
                }
            }
            (ChannelSpec::BiAwgn { snr }, Observation::Real(y)) => {
                1.0 - softplus(-2.0 * snr * bpsk(x) * y) / LN_2
            }
            _ => unreachable!("observation type follows the channel"),
        }
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ChannelSpec::Bsc { p } => write!(f, "BSC(p={p})"),
            ChannelSpec::BiAwgn { snr } => write!(f, "BI-AWGN({:.3} dB)", linear_to_db(snr)),
        }
    }
}

/// A single channel output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation {
    Bit(u8),
    Real(f64),
}

impl Observation {
    /// `ln P(y | x = 0) - ln P(y | x = 1)`.
    #[inline]
    pub fn llr(&self, spec: &ChannelSpec) -> f64 {
        match (*self, *spec) {
            (Observation::Bit(y), ChannelSpec::Bsc { p }) => {
                let l = ChannelSpec::bsc_llr(p);
                if y == 0 {
                    l
                } else {
                    -l
                }
            }
            (Observation::Real(y), ChannelSpec::BiAwgn { snr }) => 2.0 * snr * y,
            // Mixed pairs only arise from caller error; treat them as erasures.
            _ => 0.0,
        }
    }
}

/// Passes every bit of `bits` through the channel.
pub fn transmit<R: Rng + ?Sized>(bits: &[u8], spec: &ChannelSpec, rng: &mut R) -> Vec<Observation> {
    bits.iter().map(|&b| spec.observe(b, rng)).collect()
}

#[inline]
fn bpsk(bit: u8) -> f64 {
    1.0 - 2.0 * f64::from(bit & 1)
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Capacity of the real-input AWGN channel, `0.5 log2(1 + snr)`.
pub fn awgn_capacity(snr: f64) -> f64 {
    0.5 * (1.0 + snr).log2()
}

/// Mutual information of equiprobable BPSK over AWGN, by composite Simpson
/// quadrature over the noise density (12 standard deviations each side).
pub fn biawgn_capacity(snr: f64) -> f64 {
    const HALF_WIDTH: f64 = 12.0;
    const INTERVALS: usize = 4800;
    let h = 2.0 * HALF_WIDTH / INTERVALS as f64;
    let sigma = 1.0 / snr.sqrt();
    let integrand = |z: f64| {
        let y = 1.0 + sigma * z;
        let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        density * softplus(-2.0 * snr * y) / LN_2
    };
    let mut acc = integrand(-HALF_WIDTH) + integrand(HALF_WIDTH);
    for i in 1..INTERVALS {
        let z = -HALF_WIDTH + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * integrand(z);
    }
    1.0 - acc * h / 3.0
}
