//! Rate-1/3 feedforward convolutional codes and their trellises.
//!
//! A code is given by its memory `nu` and three generator polynomials. Each
//! polynomial is a bit mask of `nu + 1` taps where bit `d` multiplies the
//! input delayed by `d` bit-times, so the octal string `"117"` (binary
//! `1001111`) taps delays 6, 3, 2, 1 and 0. This is the usual table
//! convention where the leftmost octal digit carries the highest-degree taps.
//!
//! The encoder state packs the last `nu` inputs with the most recent one in
//! bit 0. Feeding input `u` into state `s` moves to `((s << 1) | u) mod 2^nu`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of output symbols per input bit of the mother code.
pub const OUTPUTS_PER_BIT: usize = 3;

/// Three generator polynomials of a rate-1/3 feedforward code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GeneratorSet {
    memory: u32,
    polys: [u32; 3],
}

impl GeneratorSet {
    /// Largest supported memory. 2^14 states is already far beyond anything
    /// that can be decoded at useful speed.
    pub const MAX_MEMORY: u32 = 14;

    pub fn new(memory: u32, polys: [u32; 3]) -> Result<Self> {
        if memory == 0 || memory > Self::MAX_MEMORY {
            return Err(Error::Parameter(format!(
                "memory must be in 1..={}, got {memory}",
                Self::MAX_MEMORY
            )));
        }
        let limit = 1u32 << (memory + 1);
        for &poly in &polys {
            if poly == 0 {
                return Err(Error::InvalidPolynomial { poly, reason: "no taps".into() });
            }
            if poly >= limit {
                return Err(Error::InvalidPolynomial {
                    poly,
                    reason: format!("degree exceeds memory {memory}"),
                });
            }
            if poly & 1 == 0 && poly & (1 << memory) == 0 {
                return Err(Error::InvalidPolynomial {
                    poly,
                    reason: "neither the degree-0 nor the top tap is set".into(),
                });
            }
        }
        if polys.iter().all(|p| p & (1 << memory) == 0) {
            return Err(Error::InvalidPolynomial {
                poly: polys[0],
                reason: format!("no polynomial reaches degree {memory}"),
            });
        }
        if polys.iter().all(|p| p & 1 == 0) {
            return Err(Error::InvalidPolynomial {
                poly: polys[0],
                reason: "no polynomial has a degree-0 tap".into(),
            });
        }
        Ok(GeneratorSet { memory, polys })
    }

    /// Builds a code from octal strings such as `["117", "127", "155"]`.
    pub fn from_octal(memory: u32, polys: [&str; 3]) -> Result<Self> {
        let mut parsed = [0u32; 3];
        for (slot, text) in parsed.iter_mut().zip(polys) {
            *slot = parse_octal(text)?;
        }
        Self::new(memory, parsed)
    }

    /// 64-state code, (117, 127, 155), d_free 15.
    pub fn nu6() -> Self {
        Self::new(6, [0o117, 0o127, 0o155]).expect("valid table code")
    }

    /// 256-state code, (575, 623, 727), d_free 18.
    pub fn nu8() -> Self {
        Self::new(8, [0o575, 0o623, 0o727]).expect("valid table code")
    }

    /// 1024-state code, (2325, 2731, 3747), d_free 22.
    pub fn nu10() -> Self {
        Self::new(10, [0o2325, 0o2731, 0o3747]).expect("valid table code")
    }

    pub fn memory(&self) -> u32 {
        self.memory
    }

    pub fn polys(&self) -> [u32; 3] {
        self.polys
    }

    pub fn num_states(&self) -> usize {
        1 << self.memory
    }

    pub fn octal(&self) -> [String; 3] {
        self.polys.map(|p| format!("{p:o}"))
    }

    /// Output triple for a full register word (`nu + 1` bits, newest input in bit 0).
    #[inline]
    pub fn register_output(&self, register: u32) -> u8 {
        let mut out = 0u8;
        for (j, &g) in self.polys.iter().enumerate() {
            out |= (((register & g).count_ones() & 1) as u8) << j;
        }
        out
    }

    /// Encodes `msg` into the mother codeword.
    ///
    /// Terminated codewords carry `nu` flushing zeros and have length
    /// `3 (k + nu)`; tail-biting codewords preload the register with the last
    /// `nu` message bits and have length `3 k`.
    pub fn encode(&self, msg: &[u8], mode: TerminationMode) -> Result<Vec<u8>> {
        let nu = self.memory as usize;
        if msg.is_empty() {
            return Err(Error::Parameter("empty message".into()));
        }
        let mask = (1u32 << nu) - 1;
        let (mut state, tail) = match mode {
            TerminationMode::Terminated => (0u32, nu),
            TerminationMode::TailBiting => {
                if msg.len() < nu {
                    return Err(Error::MessageTooShort { len: msg.len(), memory: nu });
                }
                (tailbiting_start_state(msg, nu), 0)
            }
        };
        let mut out = Vec::with_capacity(OUTPUTS_PER_BIT * (msg.len() + tail));
        let inputs = msg.iter().copied().chain(std::iter::repeat_n(0u8, tail));
        for u in inputs {
            let register = (state << 1) | u32::from(u & 1);
            let o = self.register_output(register);
            out.extend((0..OUTPUTS_PER_BIT).map(|j| (o >> j) & 1));
            state = register & mask;
        }
        Ok(out)
    }

    /// Codeword length for `k` message bits.
    pub fn codeword_len(&self, k: usize, mode: TerminationMode) -> usize {
        match mode {
            TerminationMode::Terminated => OUTPUTS_PER_BIT * (k + self.memory as usize),
            TerminationMode::TailBiting => OUTPUTS_PER_BIT * k,
        }
    }
}

impl fmt::Display for GeneratorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c] = self.octal();
        write!(f, "nu={} ({a}, {b}, {c})", self.memory)
    }
}

fn parse_octal(text: &str) -> Result<u32> {
    let trimmed = text.trim();
    let digits = trimmed.strip_prefix("0o").unwrap_or(trimmed);
    u32::from_str_radix(digits, 8).map_err(|_| Error::PolynomialParse(text.to_string()))
}

/// Start state that makes a feedforward encoder tail-bite: the register
/// holds the last `nu` message bits, newest in bit 0.
pub fn tailbiting_start_state(msg: &[u8], nu: usize) -> u32 {
    let k = msg.len();
    (1..=nu).fold(0u32, |s, d| s | (u32::from(msg[k - d] & 1) << (d - 1)))
}

/// How the trellis path is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminationMode {
    /// `nu` zero bits appended; the path starts and ends in state 0.
    Terminated,
    /// No tail; the path starts and ends in the same (unknown) state.
    TailBiting,
}

impl TerminationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminationMode::Terminated => "terminated",
            TerminationMode::TailBiting => "tailbiting",
        }
    }
}

impl fmt::Display for TerminationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// State graph of a code.
///
/// Entering state `s'` is possible from the two predecessors
/// `(s' >> 1) | (b << (nu - 1))`, `b` in {0, 1}. The register word for that
/// branch is `s' | (b << nu)`, which is what `outputs` is indexed by.
#[derive(Debug, Clone)]
pub struct Trellis {
    gens: GeneratorSet,
    nu: u32,
    num_states: usize,
    outputs: Vec<u8>,
}

impl Trellis {
    pub fn new(gens: GeneratorSet) -> Self {
        let nu = gens.memory();
        let num_states = 1usize << nu;
        let outputs = (0..2 * num_states as u32).map(|r| gens.register_output(r)).collect();
        Trellis { gens, nu, num_states, outputs }
    }

    pub fn generators(&self) -> &GeneratorSet {
        &self.gens
    }

    pub fn memory(&self) -> usize {
        self.nu as usize
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn next_state(&self, state: usize, input: u8) -> usize {
        ((state << 1) | usize::from(input & 1)) & (self.num_states - 1)
    }

    /// Packed output triple (bit `j` is the output of polynomial `j`).
    #[inline]
    pub fn output(&self, state: usize, input: u8) -> u8 {
        self.outputs[(state << 1) | usize::from(input & 1)]
    }

    #[inline]
    pub fn output_bits(&self, state: usize, input: u8) -> [u8; 3] {
        let o = self.output(state, input);
        [o & 1, (o >> 1) & 1, (o >> 2) & 1]
    }

    #[inline]
    pub fn predecessor(&self, state: usize, oldest: usize) -> usize {
        (state >> 1) | (oldest << (self.nu - 1))
    }

    /// Output of the branch entering `state` from predecessor with oldest bit `oldest`.
    #[inline]
    pub fn entering_output(&self, state: usize, oldest: usize) -> u8 {
        self.outputs[state | (oldest << self.nu)]
    }

    pub(crate) fn outputs(&self) -> &[u8] {
        &self.outputs
    }
}

/// Convenience wrapper matching the rest of the API.
pub fn build_trellis(gens: GeneratorSet) -> Trellis {
    Trellis::new(gens)
}

/// Convenience wrapper around [`GeneratorSet::encode`].
pub fn encode(gens: &GeneratorSet, msg: &[u8], mode: TerminationMode) -> Result<Vec<u8>> {
    gens.encode(msg, mode)
}

/// Result of a free-distance search.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceSpectrum {
    pub d_free: u32,
    /// Number of error events (diverging from and first remerging with the
    /// all-zero path) of weight `d_free`.
    pub multiplicity: u64,
    /// Number of trellis stages explored.
    pub horizon: usize,
    /// True when every path still unmerged at the horizon is heavier than
    /// `d_free`, so no later event can change the result.
    pub exact: bool,
}

/// Free distance and its multiplicity, by dynamic programming over
/// (state, accumulated weight) along error events.
pub fn distance_spectrum(gens: &GeneratorSet, max_input_len: usize) -> DistanceSpectrum {
    let trellis = Trellis::new(*gens);
    let s = trellis.num_states();
    // The impulse response is an event, so its weight caps the search.
    let cap = gens.polys().iter().map(|p| p.count_ones()).sum::<u32>() as usize;
    let width = cap + 1;
    let mut events = vec![0u64; width];
    let mut paths = vec![0u64; s * width];
    let mut next = vec![0u64; s * width];

    let w0 = trellis.output(0, 1).count_ones() as usize;
    paths[trellis.next_state(0, 1) * width + w0] = 1;
    let mut horizon = 1;
    while horizon < max_input_len.max(1) {
        next.iter_mut().for_each(|c| *c = 0);
        let mut alive = false;
        for state in 1..s {
            for w in 0..width {
                let count = paths[state * width + w];
                if count == 0 {
                    continue;
                }
                for u in 0..2u8 {
                    let nw = w + trellis.output(state, u).count_ones() as usize;
                    if nw > cap {
                        continue;
                    }
                    let ns = trellis.next_state(state, u);
                    if ns == 0 {
                        events[nw] += count;
                    } else {
                        next[ns * width + nw] += count;
                        alive = true;
                    }
                }
            }
        }
        std::mem::swap(&mut paths, &mut next);
        horizon += 1;
        if !alive {
            break;
        }
    }

    let d_free = events.iter().position(|&c| c > 0).unwrap_or(width) as u32;
    let multiplicity = events.get(d_free as usize).copied().unwrap_or(0);
    let lightest_open = (width..s * width).filter(|&i| paths[i] > 0).map(|i| i % width).min();
    let exact = match lightest_open {
        None => true,
        Some(w) => w as u32 > d_free,
    };
    DistanceSpectrum { d_free, multiplicity, horizon, exact }
}
