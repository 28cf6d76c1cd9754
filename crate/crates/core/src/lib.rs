pub mod bounds;
pub mod channel;
pub mod crc;
pub mod error;
pub mod lenopt;
pub mod punctures;
pub mod rng;
pub mod rova;
pub mod trellis;
pub mod vlfsim;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/codes.md")]
    pub struct Codes;
    #[doc = include_str!("../../../book/src/decoding.md")]
    pub struct Decoding;
    #[doc = include_str!("../../../book/src/stopping.md")]
    pub struct Stopping;
    #[doc = include_str!("../../../book/src/bounds.md")]
    pub struct Bounds;
    #[doc = include_str!("../../../book/src/lengths.md")]
    pub struct Lengths;
}
