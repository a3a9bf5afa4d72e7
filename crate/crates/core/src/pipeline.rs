//! Sender and receiver paths, end to end.
//!
//! Sender: frame the message, embed it into a token grid, decode to pixels. With ECC
//! on, also replay the channel (same noise seed unless the sender has its own), run
//! the receiver's token recovery on the result, and send the residual errors as
//! stego text.
//!
//! Receiver: re-encode (stage 1), optimize (stage 2), apply the text's corrections
//! (stage 3), then extract and unframe.

use serde::{Deserialize, Serialize};

use crate::bits::{decrypt_payload_prefix, frame_message, unframe_message, BitString, HEADER_BITS};
use crate::channel::ChannelSpec;
use crate::codec::{embed_sequence, extract_sequence, Carrier};
use crate::config::PipelineConfig;
use crate::ecc::{ecc_decode, ecc_encode, error_stats, EccParams, EccStats};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::key::{domain, StegoKey};
use crate::model::{Condition, TokenId};
use crate::optim::{optimize_tokens, OptimReport};
use crate::text::{embed_ecc, extract_ecc, StegoText};
use crate::vq::{TokenGrid, Tokenizer};

/// Error-correction side of a sender run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EccSummary {
    /// Token errors the receiver is expected to see after optimization.
    pub errors: usize,
    pub corrected: usize,
    /// Bits of ECC records, before framing.
    pub ecc_bits: usize,
    pub text_payload_bits: usize,
    pub text_capacity_bits: usize,
    pub stats: EccStats,
}

#[derive(Clone, Debug)]
pub struct SenderOutput {
    pub grid: TokenGrid,
    /// Stego image as written to disk (values rounded to `f32`).
    pub image: ImageTensor,
    pub condition: Condition,
    pub message_bits: usize,
    /// Framed bits carried by the grid (header included).
    pub embedded_bits: usize,
    /// `Σ k*` over the grid.
    pub capacity_bits: usize,
    pub text: Option<StegoText>,
    pub ecc: Option<EccSummary>,
}

#[derive(Clone, Debug)]
pub struct ReceiverOutput {
    /// The message when the frame decodes, otherwise the decrypted prefix.
    pub message: BitString,
    pub complete: bool,
    pub m1: TokenGrid,
    pub m12: TokenGrid,
    pub m123: TokenGrid,
    pub optim: OptimReport,
    /// Why stage 3 or extraction fell short, if it did.
    pub issues: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub channel: String,
    /// Token recovery rate (percent) after each stage.
    pub rq_m1: f64,
    pub rq_m12: f64,
    pub rq_m123: f64,
    /// Correct message bits before the first bit error.
    pub cap: usize,
    pub message_bits: usize,
    pub embedded_bits: usize,
    pub recovered: bool,
    pub ecc: Option<EccSummary>,
    pub optim_iterations: usize,
    pub optim_final_loss: f64,
}

impl RunMetrics {
    pub fn rq(&self) -> f64 {
        self.rq_m123
    }
}

/// What the harness knows but the receiver does not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub grid: TokenGrid,
    pub message: String,
    pub embedded_bits: usize,
}

impl Reference {
    pub fn message_bits(&self) -> Result<BitString> {
        BitString::parse_binary(&self.message)
    }
}

pub struct Pipeline {
    config: PipelineConfig,
    tokenizer: Tokenizer,
    channel: ChannelSpec,
    sender_channel: ChannelSpec,
    noise_layer: ChannelSpec,
    ecc: EccParams,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            tokenizer: Tokenizer::new(config.tokenizer.clone())?,
            channel: config.channel.spec()?,
            sender_channel: config.channel.sender_spec()?,
            noise_layer: config.channel.noise_layer()?,
            ecc: config.ecc_params(),
            config,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn channel(&self) -> &ChannelSpec {
        &self.channel
    }

    /// Image-model condition, derived from the key so both sides agree on it.
    pub fn image_condition(&self, key: &StegoKey) -> Condition {
        let v = key.stream(domain::IMAGE_CONDITION).next_u64();
        Condition((v % self.config.image_model.condition_space as u64) as u32)
    }

    /// The configured channel, followed by the same `f32` rounding as the file format.
    pub fn transmit(&self, image: &ImageTensor) -> ImageTensor {
        self.channel.apply(image).round_to_f32()
    }

    fn grid_from(&self, tokens: Vec<TokenId>) -> Result<TokenGrid> {
        let s = &self.config.tokenizer;
        TokenGrid::new(s.grid_height, s.grid_width, tokens)
    }

    pub fn send(&self, message: &BitString, key: &StegoKey) -> Result<SenderOutput> {
        let condition = self.image_condition(key);
        let framed = frame_message(message, &mut key.stream(domain::IMAGE_FRAME))?;
        let out = embed_sequence(
            &self.config.image_model,
            condition,
            &framed,
            key,
            Carrier::IMAGE,
            self.config.tokenizer.tokens(),
        )?;
        if out.bits_embedded < framed.len() {
            return Err(Error::CapacityExceeded {
                needed: framed.len(),
                available: out.total_capacity(),
            });
        }
        let capacity_bits = out.total_capacity();
        let grid = self.grid_from(out.tokens)?;
        let image = self.tokenizer.decode(&grid)?.round_to_f32();

        let (text, ecc) = if self.config.ecc.enabled {
            let (t, e) = self.sender_ecc(&grid, &image, condition, key)?;
            (Some(t), Some(e))
        } else {
            (None, None)
        };

        Ok(SenderOutput {
            grid,
            image,
            condition,
            message_bits: message.len(),
            embedded_bits: framed.len(),
            capacity_bits,
            text,
            ecc,
        })
    }

    fn sender_ecc(
        &self,
        grid: &TokenGrid,
        image: &ImageTensor,
        condition: Condition,
        key: &StegoKey,
    ) -> Result<(StegoText, EccSummary)> {
        let received = self.sender_channel.apply(image).round_to_f32();
        let recovered =
            optimize_tokens(&received, &self.noise_layer, &self.tokenizer, &self.config.optimizer)?.grid;
        let book = self.tokenizer.codebook();
        let model = &self.config.image_model;
        let stats = error_stats(grid, &recovered, model, condition, book)?;

        let mut budget = usize::MAX;
        loop {
            let enc = ecc_encode(grid, &recovered, model, condition, book, &self.ecc, budget)?;
            let framed = frame_message(&enc.bits, &mut key.stream(domain::TEXT_FRAME))?;
            match embed_ecc(&framed, &received, key, &self.config.text_model, self.config.text.max_tokens) {
                Ok(text) => {
                    let summary = EccSummary {
                        errors: enc.total_errors,
                        corrected: enc.corrected(),
                        ecc_bits: enc.bits.len(),
                        text_payload_bits: text.payload_bits,
                        text_capacity_bits: text.capacity_bits,
                        stats,
                    };
                    return Ok((text, summary));
                }
                Err(Error::BudgetExceeded { available, .. }) if !enc.bits.is_empty() => {
                    // Capacity depends on the text itself, so shrink and try again.
                    budget = available
                        .saturating_sub(HEADER_BITS)
                        .min(enc.bits.len() - 1);
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn receive(
        &self,
        received: &ImageTensor,
        text: Option<&[TokenId]>,
        key: &StegoKey,
    ) -> Result<ReceiverOutput> {
        let condition = self.image_condition(key);
        let opt = optimize_tokens(received, &self.noise_layer, &self.tokenizer, &self.config.optimizer)?;
        let m1 = opt.initial_grid;
        let m12 = opt.grid;
        let mut issues = Vec::new();

        let m123 = match text {
            None => m12.clone(),
            Some(tokens) => match self.read_ecc(tokens, received, &m12, condition, key) {
                Ok(g) => g,
                Err(e) => {
                    issues.push(format!("error correction skipped: {e}"));
                    m12.clone()
                }
            },
        };

        let extracted = extract_sequence(
            &self.config.image_model,
            condition,
            &m123.indices,
            key,
            Carrier::IMAGE,
        );
        if let Some(e) = &extracted.failure {
            issues.push(format!("extraction stopped: {e}"));
        }
        let (message, complete) =
            match unframe_message(&extracted.bits, &mut key.stream(domain::IMAGE_FRAME)) {
                Ok(m) => (m, extracted.failure.is_none()),
                Err(e) => {
                    issues.push(format!("frame: {e}"));
                    let prefix =
                        decrypt_payload_prefix(&extracted.bits, &mut key.stream(domain::IMAGE_FRAME));
                    (prefix, false)
                }
            };

        Ok(ReceiverOutput {
            message,
            complete,
            m1,
            m12,
            m123,
            optim: opt.report,
            issues,
        })
    }

    fn read_ecc(
        &self,
        tokens: &[TokenId],
        received: &ImageTensor,
        m12: &TokenGrid,
        condition: Condition,
        key: &StegoKey,
    ) -> Result<TokenGrid> {
        let out = extract_ecc(tokens, received, key, &self.config.text_model);
        if let Some(e) = out.failure {
            return Err(e);
        }
        let bits = unframe_message(&out.bits, &mut key.stream(domain::TEXT_FRAME))?;
        ecc_decode(
            &bits,
            m12,
            &self.config.image_model,
            condition,
            self.tokenizer.codebook(),
            &self.ecc,
        )
    }

    /// Scores a receiver run against the sender's ground truth.
    pub fn score(
        &self,
        seed: u64,
        sent: &SenderOutput,
        truth_message: &BitString,
        got: &ReceiverOutput,
    ) -> RunMetrics {
        let cap = cap_bits(truth_message, &got.message);
        RunMetrics {
            seed,
            channel: self.channel.to_string(),
            rq_m1: got.m1.recovery_rate(&sent.grid),
            rq_m12: got.m12.recovery_rate(&sent.grid),
            rq_m123: got.m123.recovery_rate(&sent.grid),
            cap,
            message_bits: truth_message.len(),
            embedded_bits: sent.embedded_bits,
            recovered: got.complete && got.message == *truth_message,
            ecc: sent.ecc.clone(),
            optim_iterations: got.optim.iterations,
            optim_final_loss: got.optim.final_loss,
        }
    }

    /// Send, transmit, receive, score.
    pub fn run_once(&self, message: &BitString, key: &StegoKey, seed: u64) -> Result<RunMetrics> {
        let sent = self.send(message, key)?;
        let received = self.transmit(&sent.image);
        let text = sent.text.as_ref().map(|t| t.tokens.as_slice());
        let got = self.receive(&received, text, key)?;
        Ok(self.score(seed, &sent, message, &got))
    }
}

/// Correct message bits before the first wrong or missing one.
pub fn cap_bits(truth: &BitString, got: &BitString) -> usize {
    truth.common_prefix_len(got).min(truth.len())
}

/// Seeded message of `len` bits.
pub fn seeded_message(seed: u64, len: usize) -> BitString {
    let mut s = StegoKey::from_u64(seed).stream("message");
    (0..len).map(|_| s.next_bit()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pipeline(stages: &str, ecc: bool) -> Pipeline {
        let mut c = PipelineConfig::default();
        c.channel.stages = stages.into();
        c.ecc.enabled = ecc;
        Pipeline::new(c).unwrap()
    }

    #[test]
    fn lossless_round_trip() {
        let p = pipeline("none", false);
        let key = StegoKey::from_u64(1);
        let msg = seeded_message(1, 500);
        let m = p.run_once(&msg, &key, 1).unwrap();
        assert!(m.recovered);
        assert_eq!(m.cap, 500);
        assert_eq!((m.rq_m1, m.rq_m12, m.rq_m123), (100.0, 100.0, 100.0));
        assert_eq!(m.embedded_bits, 532);
    }

    #[test]
    fn empty_message() {
        let p = pipeline("none", false);
        let key = StegoKey::from_u64(2);
        let m = p.run_once(&BitString::new(), &key, 2).unwrap();
        assert!(m.recovered);
        assert_eq!(m.cap, 0);
    }

    #[test]
    fn oversized_message() {
        let p = pipeline("none", false);
        let key = StegoKey::from_u64(3);
        assert!(matches!(
            p.send(&seeded_message(3, 5000), &key),
            Err(Error::CapacityExceeded { needed: 5032, .. })
        ));
    }

    #[test]
    fn noisy_run_with_ecc_is_monotone() {
        let p = pipeline("gaussian:0.02", true);
        let key = StegoKey::from_u64(4);
        let m = p.run_once(&seeded_message(4, 300), &key, 4).unwrap();
        assert!(m.rq_m1 <= m.rq_m12 && m.rq_m12 <= m.rq_m123, "{m:?}");
        let ecc = m.ecc.unwrap();
        assert!(ecc.corrected <= ecc.errors);
    }

    #[test]
    fn cap_is_common_prefix() {
        let t = BitString::parse_binary("10110").unwrap();
        assert_eq!(cap_bits(&t, &BitString::parse_binary("10100111").unwrap()), 3);
        assert_eq!(cap_bits(&t, &BitString::parse_binary("1011011").unwrap()), 5);
        assert_eq!(cap_bits(&t, &BitString::new()), 0);
    }
}
