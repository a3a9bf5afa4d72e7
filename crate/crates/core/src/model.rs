//! Seeded autoregressive token sources.
//!
//! Logits come from a keyed integer hash of `(seed, condition, last context tokens,
//! position, token)`. The model is fully determined by its [`ModelSpec`], so sender
//! and receiver always see bit-identical distributions.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

pub type TokenId = u32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub vocab_size: usize,
    pub context_order: usize,
    pub temperature: f64,
    pub top_k: usize,
    pub seed: u64,
    pub condition_space: u32,
    /// Spread of the raw logits before temperature scaling.
    pub logit_scale: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::image_default()
    }
}

impl ModelSpec {
    pub fn image_default() -> Self {
        Self {
            vocab_size: 4096,
            context_order: 2,
            temperature: 1.0,
            top_k: 128,
            seed: 0x1a6e,
            condition_space: 1000,
            logit_scale: 1.0,
        }
    }

    pub fn text_default() -> Self {
        Self {
            vocab_size: 512,
            context_order: 2,
            temperature: 1.0,
            top_k: 64,
            seed: 0x7e47,
            condition_space: 4096,
            logit_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.top_k == 0 || self.top_k > self.vocab_size {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= top_k ({}) <= vocab_size ({})",
                self.top_k, self.vocab_size
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig("temperature must be positive".into()));
        }
        if !(self.logit_scale >= 0.0 && self.logit_scale.is_finite()) {
            return Err(Error::InvalidConfig("logit_scale must be non-negative".into()));
        }
        if self.condition_space == 0 {
            return Err(Error::InvalidConfig("condition_space must be positive".into()));
        }
        if self.vocab_size > u32::MAX as usize {
            return Err(Error::InvalidConfig("vocab_size too large".into()));
        }
        Ok(())
    }

    pub fn condition(&self, id: u32) -> Result<Condition> {
        if id >= self.condition_space {
            return Err(Error::ConditionOutOfRange {
                id,
                space: self.condition_space,
            });
        }
        Ok(Condition(id))
    }
}

/// Conditioning label: class tag for the image channel, image digest for text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Condition(pub u32);

/// Token distribution with a fixed interval layout on `[0, 1)`.
///
/// Entry `i` owns `[upper[i-1], upper[i])`, with `upper[-1] = 0` and the last upper
/// bound pinned to exactly 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    tokens: Vec<TokenId>,
    probs: Vec<f64>,
    uppers: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DistributionWire {
    entries: Vec<(TokenId, f64)>,
}

impl Serialize for Distribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DistributionWire {
            entries: self.entries().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Distribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = DistributionWire::deserialize(d)?;
        Distribution::from_ordered(wire.entries).map_err(serde::de::Error::custom)
    }
}

impl Distribution {
    /// Keeps the given order as the interval layout. Probabilities are used as given
    /// and must be positive.
    pub fn from_ordered(entries: Vec<(TokenId, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidConfig("empty distribution".into()));
        }
        if entries.iter().any(|&(_, p)| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidConfig("probabilities must be positive".into()));
        }
        let (tokens, probs): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        let mut uppers = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            uppers.push(acc.min(1.0));
        }
        *uppers.last_mut().expect("non-empty") = 1.0;
        Ok(Self {
            tokens,
            probs,
            uppers,
        })
    }

    /// Normalizes and sorts into canonical order: probability descending, then token
    /// id ascending.
    pub fn canonical(mut entries: Vec<(TokenId, f64)>) -> Result<Self> {
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidConfig("distribution has no mass".into()));
        }
        for e in &mut entries {
            e.1 /= total;
        }
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Self::from_ordered(entries)
    }

    pub fn uniform(tokens: &[TokenId]) -> Result<Self> {
        let p = 1.0 / tokens.len() as f64;
        Self::from_ordered(tokens.iter().map(|&t| (t, p)).collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn entries(&self) -> impl Iterator<Item = (TokenId, f64)> + '_ {
        self.tokens.iter().copied().zip(self.probs.iter().copied())
    }

    /// Half-open interval of entry `i`.
    pub fn interval(&self, i: usize) -> (f64, f64) {
        let lo = if i == 0 { 0.0 } else { self.uppers[i - 1] };
        (lo, self.uppers[i])
    }

    /// Index (rank in layout order) of the entry whose interval contains `r`.
    pub fn locate_index(&self, r: f64) -> usize {
        let i = self.uppers.partition_point(|&u| u <= r);
        i.min(self.tokens.len() - 1)
    }

    /// Token whose half-open interval contains `r`.
    pub fn locate(&self, r: f64) -> TokenId {
        self.tokens[self.locate_index(r)]
    }

    pub fn index_of(&self, token: TokenId) -> Option<usize> {
        self.tokens.iter().position(|&t| t == token)
    }

    pub fn prob_of(&self, token: TokenId) -> Option<f64> {
        self.index_of(token).map(|i| self.probs[i])
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    /// Shannon entropy in bits.
    pub fn entropy_bits(&self) -> f64 {
        self.probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.log2())
            .sum()
    }
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn absorb(state: u64, value: u64) -> u64 {
    mix64(state ^ mix64(value.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

const NO_TOKEN: u64 = u64::MAX;

/// Next-token distribution after top-k truncation and temperature scaling.
pub fn next_distribution(
    spec: &ModelSpec,
    condition: Condition,
    prefix: &[TokenId],
    position: usize,
) -> Result<Distribution> {
    if let Some(&bad) = prefix.iter().find(|&&t| t as usize >= spec.vocab_size) {
        return Err(Error::TokenOutOfRange {
            token: bad,
            vocab: spec.vocab_size,
        });
    }
    if condition.0 >= spec.condition_space {
        return Err(Error::ConditionOutOfRange {
            id: condition.0,
            space: spec.condition_space,
        });
    }

    let mut state = absorb(spec.seed, condition.0 as u64);
    let start = prefix.len().saturating_sub(spec.context_order);
    let context = &prefix[start..];
    for k in 0..spec.context_order {
        // Left-pad short prefixes with a sentinel so the context always has the same arity.
        let pad = spec.context_order - context.len();
        let tok = if k < pad { NO_TOKEN } else { context[k - pad] as u64 };
        state = absorb(state, tok);
    }
    state = absorb(state, position as u64);

    // Logits are monotone in the hash numerator, so top-k is selected on the integers
    // and only the survivors pay for the logarithm.
    let numerator = |t: u32| {
        let h = mix64(state ^ (t as u64).wrapping_mul(0xd6e8_feb8_6659_fd93));
        if spec.logit_scale > 0.0 {
            h >> 11
        } else {
            0
        }
    };
    let k = spec.top_k.min(spec.vocab_size);
    let by_rank = |a: &(TokenId, u64), b: &(TokenId, u64)| b.1.cmp(&a.1).then(a.0.cmp(&b.0));
    // Numerators are uniform, so a cut that keeps about 1.5k + 32 entries almost always
    // holds the whole top-k. Everything below the cut is strictly smaller than
    // everything kept, so selecting within the kept set is exact.
    let keep = (k + k / 2 + 32) as u128;
    let cut = if spec.logit_scale > 0.0 && keep < spec.vocab_size as u128 {
        let span = 1u128 << 53;
        (span - span * keep / spec.vocab_size as u128) as u64
    } else {
        0
    };
    let mut ranked: Vec<(TokenId, u64)> = (0..spec.vocab_size as u32)
        .map(|t| (t, numerator(t)))
        .filter(|e| e.1 >= cut)
        .collect();
    if ranked.len() < k {
        ranked = (0..spec.vocab_size as u32).map(|t| (t, numerator(t))).collect();
    }
    if k < ranked.len() {
        ranked.select_nth_unstable_by(k - 1, by_rank);
        ranked.truncate(k);
    }
    let logits: Vec<(TokenId, f64)> = ranked
        .into_iter()
        .map(|(t, n)| {
            let u = (n as f64 + 0.5) / (1u64 << 53) as f64;
            (t, spec.logit_scale * (u / (1.0 - u)).ln())
        })
        .collect();
    let max = logits.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
    let weights = logits
        .into_iter()
        .map(|(t, l)| (t, ((l - max) / spec.temperature).exp()))
        .collect();
    Distribution::canonical(weights)
}

/// Digest of a received image used as the text-channel condition.
///
/// The image is averaged over a 2×2 grid of blocks per channel and each mean is
/// quantized to 6 bits before hashing, so small channel noise rarely moves the digest.
pub fn text_condition_from_image(image: &ImageTensor, spec: &ModelSpec) -> Condition {
    let (h, w, c) = image.shape();
    let mut hasher = Sha256::new()
        .chain_update(b"tokensteg/text-condition")
        .chain_update(spec.seed.to_be_bytes())
        .chain_update([h as u8, w as u8, c as u8]);
    for by in 0..2 {
        for bx in 0..2 {
            let (y0, y1) = (by * h / 2, (by + 1) * h / 2);
            let (x0, x1) = (bx * w / 2, (bx + 1) * w / 2);
            for ch in 0..c {
                let mut sum = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        sum += image.get(y, x, ch);
                    }
                }
                let n = ((y1 - y0) * (x1 - x0)).max(1) as f64;
                let mean = (sum / n).clamp(-1.0, 1.0);
                let q = ((mean + 1.0) / 2.0 * 63.0).round() as u8;
                hasher.update([q]);
            }
        }
    }
    let digest = hasher.finalize();
    let v = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"));
    Condition((v % spec.condition_space as u64) as u32)
}
