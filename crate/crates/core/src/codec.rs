//! Distribution-copy embedding and extraction.
//!
//! At each step the keyed random number `r` is shifted by `i · 2^-k` for every copy
//! index `i < 2^k`. The capacity `k*` is the largest `k` for which all shifted values
//! land in pairwise distinct tokens; the message bits pick the copy. Because `k*`
//! depends only on `(dist, r)` and every shift is a measure-preserving translation of
//! `r`, the emitted token follows `dist` exactly whenever the copy index is uniform.

use crate::bits::{BitReader, BitString};
use crate::error::{Error, Result};
use crate::key::{domain, KeyedStream, StegoKey, UNIFORM_BITS};
use crate::model::{next_distribution, Condition, Distribution, ModelSpec, TokenId};

const UNIT_MASK: u64 = (1u64 << UNIFORM_BITS) - 1;
const UNIT_SCALE: f64 = (1u64 << UNIFORM_BITS) as f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub token: TokenId,
    /// Message bits consumed at this step (may be below `capacity` at the tail).
    pub bits_embedded: u32,
    pub capacity: u32,
    pub copy_index: u64,
    /// Position of `token` in the distribution's order.
    pub rank: usize,
}

fn to_unit_bits(r: f64) -> u64 {
    debug_assert!((0.0..1.0).contains(&r), "r = {r} outside [0, 1)");
    ((r * UNIT_SCALE) as u64) & UNIT_MASK
}

/// `(r + i · 2^-k) mod 1`, computed exactly on the 53-bit grid.
pub fn shifted(r: f64, copy: u64, k: u32) -> f64 {
    let base = to_unit_bits(r);
    let step = if k == 0 { 0 } else { copy << (UNIFORM_BITS - k) };
    (base.wrapping_add(step) & UNIT_MASK) as f64 / UNIT_SCALE
}

fn copies_distinct(dist: &Distribution, r: f64, k: u32, seen: &mut [bool]) -> bool {
    seen.iter_mut().for_each(|s| *s = false);
    for i in 0..(1u64 << k) {
        let idx = dist.locate_index(shifted(r, i, k));
        if std::mem::replace(&mut seen[idx], true) {
            return false;
        }
    }
    true
}

/// Largest `k` such that the `2^k` shifted copies select pairwise distinct tokens.
pub fn step_capacity(dist: &Distribution, r: f64) -> u32 {
    // 2^k distinct tokens need at least 2^k entries.
    let max_k = (usize::BITS - 1 - dist.len().leading_zeros()).min(UNIFORM_BITS);
    let mut seen = vec![false; dist.len()];
    for k in 1..=max_k {
        if !copies_distinct(dist, r, k, &mut seen) {
            return k - 1;
        }
    }
    max_k
}

/// `E_r[k*]` for uniform `r`, integrated exactly over the pieces on which `k*` is
/// constant.
pub fn expected_capacity(dist: &Distribution) -> f64 {
    let max_k = (usize::BITS - 1 - dist.len().leading_zeros()).min(UNIFORM_BITS);
    let mut seen = vec![false; dist.len()];
    let mut total = 0.0;
    for k in 1..=max_k {
        let width = 1.0 / (1u64 << k) as f64;
        let mut cuts: Vec<f64> = (0..dist.len() - 1).map(|i| dist.interval(i).1 % width).collect();
        cuts.extend([0.0, width]);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let good: f64 = cuts
            .windows(2)
            .filter(|c| copies_distinct(dist, (c[0] + c[1]) / 2.0, k, &mut seen))
            .map(|c| c[1] - c[0])
            .sum();
        // Distinct copies at k imply distinct copies at every smaller k.
        if good == 0.0 {
            break;
        }
        total += good / width;
    }
    total
}

/// Embeds up to `k*` bits from `message`. Once the message runs out, the copy index is
/// completed with bits from `pad`.
pub fn embed_step(
    dist: &Distribution,
    r: f64,
    message: &mut BitReader<'_>,
    pad: &mut KeyedStream,
) -> StepOutcome {
    let capacity = step_capacity(dist, r);
    let mut copy = 0u64;
    let mut used = 0;
    for _ in 0..capacity {
        let bit = match message.read_bit() {
            Some(b) => {
                used += 1;
                b
            }
            None => pad.next_bit(),
        };
        copy = (copy << 1) | bit as u64;
    }
    let rank = dist.locate_index(shifted(r, copy, capacity));
    StepOutcome {
        token: dist.tokens()[rank],
        bits_embedded: used,
        capacity,
        copy_index: copy,
        rank,
    }
}

/// Recovers the copy index of `observed` as `k*` bits.
///
/// Fails with [`Error::TokenNotInSupport`] (step 0) when no copy selects `observed`.
pub fn extract_step(dist: &Distribution, r: f64, observed: TokenId) -> Result<(BitString, u32)> {
    let not_found = Error::TokenNotInSupport {
        step: 0,
        token: observed,
    };
    let target = dist.index_of(observed).ok_or(not_found)?;
    let k = step_capacity(dist, r);
    let copy = (0..(1u64 << k))
        .find(|&i| dist.locate_index(shifted(r, i, k)) == target)
        .ok_or(Error::TokenNotInSupport {
            step: 0,
            token: observed,
        })?;
    let mut bits = BitString::with_capacity(k as usize);
    bits.push_uint(copy, k);
    Ok((bits, k))
}

/// Stream labels for one carrier.
#[derive(Clone, Copy, Debug)]
pub struct Carrier {
    pub sampling: &'static str,
    pub pad: &'static str,
}

impl Carrier {
    pub const IMAGE: Carrier = Carrier {
        sampling: domain::IMAGE_SAMPLING,
        pad: domain::IMAGE_PAD,
    };
    pub const TEXT: Carrier = Carrier {
        sampling: domain::TEXT_SAMPLING,
        pad: domain::TEXT_PAD,
    };
}

/// How the copy index is chosen. Only `DistributionCopy` is secure; `GreedyCopy`
/// picks the most probable of the selectable tokens and exists as a detectable
/// control for the statistical tests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Strategy {
    #[default]
    DistributionCopy,
    GreedyCopy,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbedOutcome {
    pub tokens: Vec<TokenId>,
    pub bits_embedded: usize,
    pub capacities: Vec<u32>,
}

impl EmbedOutcome {
    pub fn total_capacity(&self) -> usize {
        self.capacities.iter().map(|&k| k as usize).sum()
    }
}

/// Autoregressive embedder that advances one token at a time.
pub struct Embedder<'m> {
    spec: &'m ModelSpec,
    condition: Condition,
    sampling: KeyedStream,
    pad: KeyedStream,
    strategy: Strategy,
    out: EmbedOutcome,
}

impl<'m> Embedder<'m> {
    pub fn new(spec: &'m ModelSpec, condition: Condition, key: &StegoKey, carrier: Carrier) -> Self {
        Self {
            spec,
            condition,
            sampling: key.stream(carrier.sampling),
            pad: key.stream(carrier.pad),
            strategy: Strategy::DistributionCopy,
            out: EmbedOutcome::default(),
        }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn step(&mut self, message: &mut BitReader<'_>) -> Result<StepOutcome> {
        let pos = self.out.tokens.len();
        let dist = next_distribution(self.spec, self.condition, &self.out.tokens, pos)?;
        let r = self.sampling.next_uniform();
        let outcome = match self.strategy {
            Strategy::DistributionCopy => embed_step(&dist, r, message, &mut self.pad),
            Strategy::GreedyCopy => {
                let mut o = embed_step(&dist, r, message, &mut self.pad);
                let (best, copy) = (0..(1u64 << o.capacity))
                    .map(|i| (dist.locate_index(shifted(r, i, o.capacity)), i))
                    .min()
                    .expect("at least one copy");
                o.token = dist.tokens()[best];
                o.rank = best;
                o.copy_index = copy;
                o
            }
        };
        self.out.tokens.push(outcome.token);
        self.out.bits_embedded += outcome.bits_embedded as usize;
        self.out.capacities.push(outcome.capacity);
        Ok(outcome)
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.out.tokens
    }

    pub fn finish(self) -> EmbedOutcome {
        self.out
    }
}

/// Generates `length` tokens carrying as much of `message` as fits.
pub fn embed_sequence(
    spec: &ModelSpec,
    condition: Condition,
    message: &BitString,
    key: &StegoKey,
    carrier: Carrier,
    length: usize,
) -> Result<EmbedOutcome> {
    embed_sequence_with(spec, condition, message, key, carrier, length, Strategy::DistributionCopy)
}

pub fn embed_sequence_with(
    spec: &ModelSpec,
    condition: Condition,
    message: &BitString,
    key: &StegoKey,
    carrier: Carrier,
    length: usize,
    strategy: Strategy,
) -> Result<EmbedOutcome> {
    let mut reader = message.reader();
    let mut embedder = Embedder::new(spec, condition, key, carrier).with_strategy(strategy);
    for _ in 0..length {
        embedder.step(&mut reader)?;
    }
    Ok(embedder.finish())
}

/// Plain keyed sampling: the token whose interval contains `r`.
pub fn sample_sequence(
    spec: &ModelSpec,
    condition: Condition,
    key: &StegoKey,
    carrier: Carrier,
    length: usize,
) -> Result<Vec<TokenId>> {
    let mut stream = key.stream(carrier.sampling);
    let mut tokens = Vec::with_capacity(length);
    for pos in 0..length {
        let dist = next_distribution(spec, condition, &tokens, pos)?;
        tokens.push(dist.locate(stream.next_uniform()));
    }
    Ok(tokens)
}

#[derive(Debug)]
pub struct ExtractOutcome {
    /// Bits recovered from steps before the first failure.
    pub bits: BitString,
    pub steps_decoded: usize,
    pub failure: Option<Error>,
}

/// Left-to-right extraction using the observed tokens as the prefix. Stops at the
/// first token that no copy can select; everything before it is returned.
pub fn extract_sequence(
    spec: &ModelSpec,
    condition: Condition,
    tokens: &[TokenId],
    key: &StegoKey,
    carrier: Carrier,
) -> ExtractOutcome {
    let mut stream = key.stream(carrier.sampling);
    let mut bits = BitString::new();
    for (pos, &tok) in tokens.iter().enumerate() {
        let step = next_distribution(spec, condition, &tokens[..pos], pos).and_then(|dist| {
            extract_step(&dist, stream.next_uniform(), tok)
        });
        match step {
            Ok((b, _)) => bits.extend_from(&b),
            Err(err) => {
                let failure = match err {
                    Error::TokenNotInSupport { token, .. } => {
                        Error::TokenNotInSupport { step: pos, token }
                    }
                    other => other,
                };
                return ExtractOutcome {
                    bits,
                    steps_decoded: pos,
                    failure: Some(failure),
                };
            }
        }
    }
    ExtractOutcome {
        bits,
        steps_decoded: tokens.len(),
        failure: None,
    }
}
