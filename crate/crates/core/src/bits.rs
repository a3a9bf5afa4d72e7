//! Bit strings, a cursor-based reader, and message framing.
//!
//! A framed message is a 32-bit big-endian length header followed by the payload,
//! with the whole string XORed against a keyed stream.

use std::fmt;

use crate::error::{Error, Result};
use crate::key::KeyedStream;

pub const HEADER_BITS: usize = 32;

#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    bits: Vec<bool>,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            bits: Vec::with_capacity(n),
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// MSB-first expansion of each byte.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        let mut out = Self::with_capacity(bytes.len() * 8);
        for &b in bytes {
            out.push_uint(b as u64, 8);
        }
        out
    }

    /// Packs into bytes MSB-first; the last byte is zero-padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits
            .chunks(8)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)))
            })
            .collect()
    }

    /// Parses a string of `0`/`1` characters; whitespace is ignored.
    pub fn parse_binary(text: &str) -> Result<Self> {
        text.chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::MalformedInput(format!("unexpected bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::from_bits)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_uint(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        for i in (0..width).rev() {
            self.bits.push((value >> i) & 1 == 1);
        }
    }

    pub fn extend_from(&mut self, other: &BitString) {
        self.bits.extend_from_slice(&other.bits);
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        self.bits.get(i).copied()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn truncate(&mut self, len: usize) {
        self.bits.truncate(len);
    }

    pub fn slice(&self, start: usize, end: usize) -> BitString {
        Self::from_bits(self.bits[start..end].to_vec())
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader { bits: &self.bits, pos: 0 }
    }

    /// Length of the longest common prefix with `other`.
    pub fn common_prefix_len(&self, other: &BitString) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .take_while(|(a, b)| a == b)
            .count()
    }

    /// XOR with the next `len()` bits of `stream`.
    pub fn xor_stream(&self, stream: &mut KeyedStream) -> BitString {
        Self::from_bits(self.bits.iter().map(|&b| b ^ stream.next_bit()).collect())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({})", self)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self::from_bits(iter.into_iter().collect())
    }
}

/// Forward-only cursor over a bit string.
#[derive(Clone, Debug)]
pub struct BitReader<'a> {
    bits: &'a [bool],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.pos
    }

    pub fn read_bit(&mut self) -> Option<bool> {
        let bit = self.bits.get(self.pos).copied()?;
        self.pos += 1;
        Some(bit)
    }

    /// Reads `width` bits as an unsigned integer, MSB first. `None` if fewer remain.
    pub fn read_uint(&mut self, width: u32) -> Option<u64> {
        if self.remaining() < width as usize {
            return None;
        }
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | self.read_bit()? as u64;
        }
        Some(v)
    }
}

/// Prepends a 32-bit length header and encrypts the whole string with `stream`.
pub fn frame_message(payload: &BitString, stream: &mut KeyedStream) -> Result<BitString> {
    let len = u32::try_from(payload.len()).map_err(|_| Error::PayloadTooLong(payload.len()))?;
    let mut plain = BitString::with_capacity(HEADER_BITS + payload.len());
    plain.push_uint(len as u64, HEADER_BITS as u32);
    plain.extend_from(payload);
    Ok(plain.xor_stream(stream))
}

/// Inverse of [`frame_message`]. Trailing bits past the declared length are ignored.
pub fn unframe_message(framed: &BitString, stream: &mut KeyedStream) -> Result<BitString> {
    if framed.len() < HEADER_BITS {
        return Err(Error::TruncatedFrame {
            declared: HEADER_BITS,
            available: framed.len(),
        });
    }
    let header = framed.slice(0, HEADER_BITS).xor_stream(stream);
    let declared = header.reader().read_uint(HEADER_BITS as u32).unwrap_or(0) as usize;
    let available = framed.len() - HEADER_BITS;
    if declared > available {
        return Err(Error::TruncatedFrame { declared, available });
    }
    Ok(framed
        .slice(HEADER_BITS, HEADER_BITS + declared)
        .xor_stream(stream))
}

/// Decrypts everything after the header without trusting the declared length.
/// Used for measuring how much of a damaged message survived.
pub fn decrypt_payload_prefix(framed: &BitString, stream: &mut KeyedStream) -> BitString {
    if framed.len() <= HEADER_BITS {
        return BitString::new();
    }
    let _header = framed.slice(0, HEADER_BITS).xor_stream(stream);
    framed.slice(HEADER_BITS, framed.len()).xor_stream(stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::key::StegoKey;
    use proptest::prelude::*;

    fn stream(seed: u64) -> KeyedStream {
        StegoKey::from_u64(seed).stream("frame")
    }

    #[test]
    fn empty_payload_is_header_only() {
        let framed = frame_message(&BitString::new(), &mut stream(1)).unwrap();
        assert_eq!(framed.len(), 32);
        // Header of zeros XOR keystream is the keystream itself.
        let mut ks = stream(1);
        let expect: BitString = (0..32).map(|_| ks.next_bit()).collect();
        assert_eq!(framed, expect);
        assert!(unframe_message(&framed, &mut stream(1)).unwrap().is_empty());
    }

    #[test]
    fn framed_length() {
        let payload: BitString = (0..1000).map(|i| i % 3 == 0).collect();
        let framed = frame_message(&payload, &mut stream(2)).unwrap();
        assert_eq!(framed.len(), 1032);
    }

    #[test]
    fn short_input_is_truncated_frame() {
        let bits: BitString = (0..31).map(|_| false).collect();
        assert!(matches!(
            unframe_message(&bits, &mut stream(3)),
            Err(Error::TruncatedFrame { .. })
        ));
    }

    #[test]
    fn flipped_header_bit_is_detected_or_changes_length() {
        let payload: BitString = (0..100).map(|i| i % 2 == 0).collect();
        let framed = frame_message(&payload, &mut stream(4)).unwrap();
        for bit in 0..32 {
            let mut bad = framed.as_slice().to_vec();
            bad[bit] = !bad[bit];
            match unframe_message(&BitString::from_bits(bad), &mut stream(4)) {
                Err(Error::TruncatedFrame { .. }) => {}
                Ok(out) => assert_ne!(out.len(), payload.len()),
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }

    #[test]
    fn trailing_padding_is_ignored() {
        let payload = BitString::from_bytes(b"hi");
        let mut framed = frame_message(&payload, &mut stream(5)).unwrap();
        framed.push_uint(0b1011, 4);
        assert_eq!(unframe_message(&framed, &mut stream(5)).unwrap(), payload);
    }

    #[test]
    fn monobit_on_framed_zeros() {
        let payload: BitString = (0..100_000).map(|_| false).collect();
        let framed = frame_message(&payload, &mut stream(6)).unwrap();
        let n = framed.len() as f64;
        let ones = framed.as_slice().iter().filter(|&&b| b).count() as f64;
        // NIST SP 800-22 monobit: |S_n| / sqrt(n) against erfc at 0.01.
        let s_obs = (2.0 * ones - n).abs() / n.sqrt();
        let p = statrs::function::erf::erfc(s_obs / std::f64::consts::SQRT_2);
        assert!(p > 0.01, "monobit p = {p}");
    }

    #[test]
    fn byte_packing() {
        let b = BitString::from_bytes(&[0xA5, 0x01]);
        assert_eq!(b.to_string(), "1010010100000001");
        assert_eq!(b.to_bytes(), vec![0xA5, 0x01]);
    }

    proptest! {
        #[test]
        fn frame_round_trip(bits in proptest::collection::vec(any::<bool>(), 0..600), seed in any::<u64>()) {
            let payload = BitString::from_bits(bits);
            let framed = frame_message(&payload, &mut stream(seed)).unwrap();
            prop_assert_eq!(unframe_message(&framed, &mut stream(seed)).unwrap(), payload);
        }
    }
}
