//! Shared steganographic key and the keyed pseudorandom streams derived from it.
//!
//! Every stream is SHA-256 in counter mode over `seed ‖ len(domain) ‖ domain ‖ counter`,
//! so identical `(seed, domain, counter)` triples produce identical output on every
//! platform. Separate domains give independent streams from the same seed.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Resolution of [`KeyedStream::next_uniform`] in bits.
pub const UNIFORM_BITS: u32 = 53;

/// Stream labels used by the pipeline.
pub mod domain {
    pub const IMAGE_SAMPLING: &str = "image/sampling";
    pub const IMAGE_FRAME: &str = "image/frame";
    pub const IMAGE_PAD: &str = "image/pad";
    pub const IMAGE_CONDITION: &str = "image/condition";
    pub const TEXT_SAMPLING: &str = "text/sampling";
    pub const TEXT_FRAME: &str = "text/frame";
    pub const TEXT_PAD: &str = "text/pad";
}

/// 256-bit shared secret.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct StegoKey {
    seed: [u8; 32],
}

impl StegoKey {
    pub fn new(seed: [u8; 32]) -> Self {
        Self { seed }
    }

    /// Expands a small integer into a key. Used for seeded experiments.
    pub fn from_u64(value: u64) -> Self {
        let digest = Sha256::new()
            .chain_update(b"tokensteg/key-from-u64")
            .chain_update(value.to_be_bytes())
            .finalize();
        Self { seed: digest.into() }
    }

    pub fn from_hex(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.len() != 64 {
            return Err(Error::InvalidKey(format!(
                "expected 64 hex characters, got {}",
                text.len()
            )));
        }
        let mut seed = [0u8; 32];
        hex::decode_to_slice(text, &mut seed).map_err(|e| Error::InvalidKey(e.to_string()))?;
        Ok(Self { seed })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.seed)
    }

    pub fn seed(&self) -> &[u8; 32] {
        &self.seed
    }

    pub fn stream(&self, domain: &str) -> KeyedStream {
        KeyedStream::new(*self, domain)
    }
}

impl fmt::Debug for StegoKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Only a short fingerprint; the key itself stays out of logs.
        write!(f, "StegoKey({}..)", &self.to_hex()[..8])
    }
}

impl FromStr for StegoKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_hex(s)
    }
}

/// Deterministic keystream bound to one `(key, domain)` pair.
#[derive(Clone, Debug)]
pub struct KeyedStream {
    key: StegoKey,
    domain: String,
    counter: u64,
    bit_buf: [u8; 32],
    bit_pos: usize,
}

impl KeyedStream {
    pub fn new(key: StegoKey, domain: &str) -> Self {
        Self {
            key,
            domain: domain.to_owned(),
            counter: 0,
            bit_buf: [0; 32],
            bit_pos: 256,
        }
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Hash block for an explicit counter value. Does not advance the stream.
    pub fn block_at(&self, counter: u64) -> [u8; 32] {
        let domain = self.domain.as_bytes();
        Sha256::new()
            .chain_update(self.key.seed)
            .chain_update((domain.len() as u32).to_be_bytes())
            .chain_update(domain)
            .chain_update(counter.to_be_bytes())
            .finalize()
            .into()
    }

    pub fn next_block(&mut self) -> [u8; 32] {
        let block = self.block_at(self.counter);
        self.counter += 1;
        block
    }

    pub fn next_u64(&mut self) -> u64 {
        let block = self.next_block();
        u64::from_be_bytes(block[..8].try_into().expect("8-byte slice"))
    }

    /// Uniform value in `[0, 1)` with 53 bits of resolution, as an integer numerator
    /// over `2^53`.
    pub fn next_uniform_bits(&mut self) -> u64 {
        self.next_u64() >> (64 - UNIFORM_BITS)
    }

    /// Uniform value in `[0, 1)`; one counter step per call.
    pub fn next_uniform(&mut self) -> f64 {
        self.next_uniform_bits() as f64 / (1u64 << UNIFORM_BITS) as f64
    }

    /// Keystream bit, MSB-first within each block.
    pub fn next_bit(&mut self) -> bool {
        if self.bit_pos == 256 {
            self.bit_buf = self.next_block();
            self.bit_pos = 0;
        }
        let byte = self.bit_buf[self.bit_pos / 8];
        let bit = (byte >> (7 - self.bit_pos % 8)) & 1 == 1;
        self.bit_pos += 1;
        bit
    }
}
