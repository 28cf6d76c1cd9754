//! Cyclic redundancy checks given in Koopman notation.
//!
//! A Koopman constant lists the generator's coefficients from `x^A` down to
//! `x^1`; the `+1` term is implicit. `0xcd` is therefore
//! `x^8 + x^7 + x^4 + x^3 + x + 1` and `0x8810` is `x^16 + x^12 + x^5 + 1`.
//!
//! The register starts at zero, nothing is reflected and nothing is XORed
//! into the result. Message bit 0 is the highest-degree coefficient and the
//! check bits are appended highest degree first, so a valid word is a
//! multiple of the generator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CrcPoly {
    koopman: u64,
    width: u32,
}

impl CrcPoly {
    pub fn from_koopman(koopman: u64) -> Result<Self> {
        if koopman == 0 {
            return Err(Error::Crc("zero polynomial".into()));
        }
        let width = 64 - koopman.leading_zeros();
        if width > 32 {
            return Err(Error::Crc(format!("{koopman:#x} is wider than 32 bits")));
        }
        Ok(CrcPoly { koopman, width })
    }

    /// Number of check bits `A`.
    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn koopman(&self) -> u64 {
        self.koopman
    }

    /// Full generator including the `x^A` and `+1` terms, bit `i` = `x^i`.
    pub fn generator(&self) -> u64 {
        (self.koopman << 1) | 1
    }

    /// Remainder of `bits(x) * x^A` modulo the generator.
    fn remainder(&self, bits: &[u8]) -> u64 {
        let a = self.width;
        let mask = (1u64 << a) - 1;
        let low = self.generator() & mask;
        let mut reg = 0u64;
        for &b in bits {
            let feedback = ((reg >> (a - 1)) & 1) ^ u64::from(b & 1);
            reg = (reg << 1) & mask;
            if feedback == 1 {
                reg ^= low;
            }
        }
        reg
    }
}

impl fmt::Display for CrcPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.koopman)
    }
}

impl FromStr for CrcPoly {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let digits = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")).unwrap_or(t);
        let value = u64::from_str_radix(digits, 16).map_err(|_| Error::Crc(format!("cannot parse {s:?}")))?;
        Self::from_koopman(value)
    }
}

impl TryFrom<String> for CrcPoly {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CrcPoly> for String {
    fn from(p: CrcPoly) -> String {
        p.to_string()
    }
}

/// `msg` followed by its `A` check bits.
pub fn crc_append(msg: &[u8], poly: &CrcPoly) -> Vec<u8> {
    let a = poly.width();
    let rem = poly.remainder(msg);
    let mut out = Vec::with_capacity(msg.len() + a);
    out.extend(msg.iter().map(|b| b & 1));
    out.extend((0..a).rev().map(|i| ((rem >> i) & 1) as u8));
    out
}

/// True when `bits` is a multiple of the generator.
pub fn crc_check(bits: &[u8], poly: &CrcPoly) -> bool {
    poly.remainder(bits) == 0
}
