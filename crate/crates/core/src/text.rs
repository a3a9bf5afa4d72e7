//! Stego text carrying the error-correction stream.
//!
//! The text model is conditioned on a coarse digest of the received image, so the
//! receiver recomputes the same condition from what it actually got. Texts always
//! run to `max_tokens`; once the payload is spent the remaining tokens are padding,
//! so text length says nothing about payload size.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::codec::{extract_sequence, Carrier, Embedder, ExtractOutcome};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::key::{KeyedStream, StegoKey};
use crate::model::{next_distribution, text_condition_from_image, Condition, ModelSpec, TokenId};

pub const DEFAULT_MAX_TOKENS: usize = 200;

const WORDS_TXT: &str = include_str!("../data/words.txt");

/// Rendering vocabulary; token id `i` is word `i`.
pub fn word_list() -> &'static [&'static str] {
    static WORDS: OnceLock<Vec<&'static str>> = OnceLock::new();
    WORDS.get_or_init(|| WORDS_TXT.lines().map(str::trim).filter(|w| !w.is_empty()).collect())
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StegoText {
    pub tokens: Vec<TokenId>,
    /// Bits of payload carried.
    pub payload_bits: usize,
    /// `Σ k*` over the text: what it could have carried.
    pub capacity_bits: usize,
}

impl StegoText {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Whitespace-joined words. Ids beyond the word list render as `#id`.
    pub fn to_words(&self) -> String {
        let words = word_list();
        self.tokens
            .iter()
            .map(|&t| match words.get(t as usize) {
                Some(w) => (*w).to_owned(),
                None => format!("#{t}"),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Token ids from rendered words; the inverse of [`StegoText::to_words`].
    pub fn parse_words(text: &str) -> Result<Vec<TokenId>> {
        let words = word_list();
        text.split_whitespace()
            .map(|w| {
                if let Some(id) = w.strip_prefix('#') {
                    return id.parse().map_err(|_| Error::MalformedInput(format!("bad token {w:?}")));
                }
                words
                    .iter()
                    .position(|x| *x == w)
                    .map(|i| i as TokenId)
                    .ok_or_else(|| Error::MalformedInput(format!("unknown word {w:?}")))
            })
            .collect()
    }
}

/// Embeds `bits` into a text of exactly `max_tokens` tokens.
pub fn embed_ecc(
    bits: &BitString,
    received: &ImageTensor,
    key: &StegoKey,
    model: &ModelSpec,
    max_tokens: usize,
) -> Result<StegoText> {
    let condition = text_condition_from_image(received, model);
    embed_text(bits, condition, key, model, max_tokens)
}

pub fn embed_text(
    bits: &BitString,
    condition: Condition,
    key: &StegoKey,
    model: &ModelSpec,
    max_tokens: usize,
) -> Result<StegoText> {
    model.validate()?;
    let mut reader = bits.reader();
    let mut embedder = Embedder::new(model, condition, key, Carrier::TEXT);
    for _ in 0..max_tokens {
        embedder.step(&mut reader)?;
    }
    let out = embedder.finish();
    if out.bits_embedded < bits.len() {
        return Err(Error::BudgetExceeded {
            needed: bits.len(),
            available: out.bits_embedded,
        });
    }
    Ok(StegoText {
        payload_bits: out.bits_embedded,
        capacity_bits: out.total_capacity(),
        tokens: out.tokens,
    })
}

/// Every bit the text carries, payload first then padding; prefix semantics on failure.
pub fn extract_ecc(
    tokens: &[TokenId],
    received: &ImageTensor,
    key: &StegoKey,
    model: &ModelSpec,
) -> ExtractOutcome {
    let condition = text_condition_from_image(received, model);
    extract_sequence(model, condition, tokens, key, Carrier::TEXT)
}

/// Realized capacity of a `max_tokens` text: `Σ k*` while carrying a message that
/// never runs out. The message is keystream drawn from `message_seed`.
pub fn realized_capacity(
    condition: Condition,
    key: &StegoKey,
    model: &ModelSpec,
    max_tokens: usize,
    message_seed: u64,
) -> Result<usize> {
    let mut source = StegoKey::from_u64(message_seed).stream("text/capacity-message");
    let message: BitString = (0..max_tokens * 16).map(|_| source.next_bit()).collect();
    let mut reader = message.reader();
    let mut embedder = Embedder::new(model, condition, key, Carrier::TEXT);
    for _ in 0..max_tokens {
        embedder.step(&mut reader)?;
    }
    Ok(embedder.finish().total_capacity())
}

/// Entropy in bits summed over the distributions seen along `tokens`.
pub fn entropy_along(model: &ModelSpec, condition: Condition, tokens: &[TokenId]) -> Result<f64> {
    let mut total = 0.0;
    for pos in 0..tokens.len() {
        total += next_distribution(model, condition, &tokens[..pos], pos)?.entropy_bits();
    }
    Ok(total)
}

/// Keystream-derived random bits, for tests and examples.
pub fn random_bits(stream: &mut KeyedStream, n: usize) -> BitString {
    (0..n).map(|_| stream.next_bit()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::sample_sequence;

    fn model() -> ModelSpec {
        ModelSpec::text_default()
    }

    fn image(v: f64) -> ImageTensor {
        ImageTensor::filled(96, 96, 3, v)
    }

    #[test]
    fn word_list_is_complete_and_unique() {
        let w = word_list();
        assert_eq!(w.len(), model().vocab_size);
        let mut sorted = w.to_vec();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), w.len());
    }

    #[test]
    fn words_round_trip() {
        let text = StegoText {
            tokens: vec![0, 5, 511, 600],
            ..Default::default()
        };
        let rendered = text.to_words();
        assert!(rendered.ends_with("#600"));
        assert_eq!(StegoText::parse_words(&rendered).unwrap(), text.tokens);
        assert!(StegoText::parse_words("the zzzz").is_err());
    }

    #[test]
    fn round_trip() {
        let key = StegoKey::from_u64(1);
        let img = image(0.2);
        let bits = random_bits(&mut key.stream("msg"), 300);
        let text = embed_ecc(&bits, &img, &key, &model(), 200).unwrap();
        assert_eq!(text.len(), 200);
        assert_eq!(text.payload_bits, 300);
        assert!(text.capacity_bits >= 300);
        let out = extract_ecc(&text.tokens, &img, &key, &model());
        assert!(out.failure.is_none());
        assert_eq!(out.bits.slice(0, 300), bits);
        assert_eq!(out.bits.len(), text.capacity_bits);
    }

    #[test]
    fn empty_payload_is_plain_sampling() {
        let key = StegoKey::from_u64(2);
        let img = image(-0.3);
        let text = embed_ecc(&BitString::new(), &img, &key, &model(), 50).unwrap();
        let cond = text_condition_from_image(&img, &model());
        let cover = sample_sequence(&model(), cond, &key, Carrier::TEXT, 50).unwrap();
        // Identical law; the realizations differ only through the padding bits.
        assert_eq!(text.len(), cover.len());
        assert_eq!(text.payload_bits, 0);
    }

    #[test]
    fn budget_exceeded() {
        let key = StegoKey::from_u64(3);
        let bits = random_bits(&mut key.stream("msg"), 5000);
        match embed_ecc(&bits, &image(0.0), &key, &model(), 20) {
            Err(Error::BudgetExceeded { needed, available }) => {
                assert_eq!(needed, 5000);
                assert!(available < 5000);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic() {
        let key = StegoKey::from_u64(4);
        let bits = random_bits(&mut key.stream("msg"), 100);
        let a = embed_ecc(&bits, &image(0.5), &key, &model(), 80).unwrap();
        let b = embed_ecc(&bits, &image(0.5), &key, &model(), 80).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn other_image_garbles() {
        let key = StegoKey::from_u64(5);
        let bits = random_bits(&mut key.stream("msg"), 200);
        let text = embed_ecc(&bits, &image(0.5), &key, &model(), 200).unwrap();
        let out = extract_ecc(&text.tokens, &image(-0.5), &key, &model());
        let n = out.bits.len().min(200);
        assert!(out.failure.is_some() || out.bits.slice(0, n) != bits.slice(0, n));
    }

    #[test]
    fn truncated_text_gives_prefix() {
        let key = StegoKey::from_u64(6);
        let img = image(0.1);
        let bits = random_bits(&mut key.stream("msg"), 300);
        let text = embed_ecc(&bits, &img, &key, &model(), 200).unwrap();
        let out = extract_ecc(&text.tokens[..60], &img, &key, &model());
        let n = out.bits.len().min(300);
        assert!(n > 0);
        assert_eq!(out.bits.slice(0, n), bits.slice(0, n));
    }

    #[test]
    fn capacity_is_monotone_in_length() {
        for seed in 0..5 {
            let key = StegoKey::from_u64(seed);
            let caps: Vec<usize> = [50, 100, 200]
                .iter()
                .map(|&n| realized_capacity(Condition(7), &key, &model(), n, seed).unwrap())
                .collect();
            assert!(caps.windows(2).all(|w| w[0] <= w[1]), "{caps:?}");
        }
    }
}
