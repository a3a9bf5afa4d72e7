//! Frequency-based distinguishability test between cover and stego grids.
//!
//! Each grid is summarized per position by the token id and by its rank in that
//! step's distribution. Ranks are what a warden holding the model would look at:
//! under the model every position's rank law is fixed, so pooling over positions and
//! grids is meaningful even though token ids are spread over a large vocabulary.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bits::frame_message;
use crate::codec::{Carrier, Embedder, Strategy};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::key::{domain, StegoKey};
use crate::model::{next_distribution, ModelSpec, TokenId};
use crate::pipeline::{seeded_message, Pipeline};
use crate::stats::{chi_square_homogeneity, kl_with_null, ks_uniform, ChiSquare, KlEstimate, KsTest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// Plain keyed sampling.
    Cover,
    /// Distribution-copy embedding of random encrypted messages.
    Stego,
    /// Embedding that always picks the most probable selectable copy.
    Greedy,
}

/// Per-position observations for one class of grids.
#[derive(Clone, Debug)]
pub struct Sample {
    pub generator: Generator,
    pub length: usize,
    pub ranks: Vec<Vec<u16>>,
    pub tokens: Vec<Vec<TokenId>>,
    /// Mean `Σ k*` per grid; zero for cover grids.
    pub mean_capacity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub generator: Generator,
    pub n_samples: usize,
    pub length: usize,
    /// Ranks pooled over positions.
    pub pooled_rank: ChiSquare,
    /// Token ids pooled over positions.
    pub pooled_token: ChiSquare,
    /// KS uniformity of the per-position rank-table p-values.
    pub per_position: KsTest,
    pub min_position_p: f64,
    pub kl_bits: KlEstimate,
    pub mean_capacity: f64,
}

impl SecurityReport {
    /// Indistinguishable at the given levels.
    pub fn passes(&self, pooled_alpha: f64, ks_alpha: f64) -> bool {
        self.pooled_rank.p_value > pooled_alpha && self.per_position.p_value > ks_alpha
    }
}

fn derived_seed(seed: u64, label: &str, index: usize) -> u64 {
    let d = Sha256::new()
        .chain_update(b"tokensteg/security")
        .chain_update(seed.to_be_bytes())
        .chain_update(label.as_bytes())
        .chain_update((index as u64).to_be_bytes())
        .finalize();
    u64::from_be_bytes(d[..8].try_into().expect("8 bytes"))
}

fn cover_grid(pipeline: &Pipeline, key: &StegoKey, length: usize) -> Result<(Vec<u16>, Vec<TokenId>)> {
    let model: &ModelSpec = &pipeline.config().image_model;
    let condition = pipeline.image_condition(key);
    let mut stream = key.stream(domain::IMAGE_SAMPLING);
    let mut tokens = Vec::with_capacity(length);
    let mut ranks = Vec::with_capacity(length);
    for pos in 0..length {
        let dist = next_distribution(model, condition, &tokens, pos)?;
        let idx = dist.locate_index(stream.next_uniform());
        ranks.push(idx as u16);
        tokens.push(dist.tokens()[idx]);
    }
    Ok((ranks, tokens))
}

fn stego_grid(
    pipeline: &Pipeline,
    key: &StegoKey,
    message_seed: u64,
    length: usize,
    strategy: Strategy,
) -> Result<(Vec<u16>, Vec<TokenId>, usize)> {
    let model = &pipeline.config().image_model;
    let condition = pipeline.image_condition(key);
    let framed = frame_message(&seeded_message(message_seed, 1000), &mut key.stream(domain::IMAGE_FRAME))?;
    let mut reader = framed.reader();
    let mut embedder = Embedder::new(model, condition, key, Carrier::IMAGE).with_strategy(strategy);
    let mut ranks = Vec::with_capacity(length);
    for _ in 0..length {
        ranks.push(embedder.step(&mut reader)?.rank as u16);
    }
    let out = embedder.finish();
    let capacity = out.total_capacity();
    Ok((ranks, out.tokens, capacity))
}

/// Generates `n` grids of the configured length. `stream` separates independent
/// draws of the same generator.
pub fn sample_class(
    config: &PipelineConfig,
    generator: Generator,
    n: usize,
    seed: u64,
    stream: &str,
    jobs: usize,
) -> Result<Sample> {
    let pipeline = Pipeline::new(config.clone())?;
    let length = config.tokenizer.tokens();
    let label = format!("{stream}/{generator:?}");
    let one = |i: usize| -> Result<(Vec<u16>, Vec<TokenId>, usize)> {
        let key = StegoKey::from_u64(derived_seed(seed, &label, i));
        match generator {
            Generator::Cover => cover_grid(&pipeline, &key, length).map(|(r, t)| (r, t, 0)),
            Generator::Stego => stego_grid(
                &pipeline,
                &key,
                derived_seed(seed, "message", i),
                length,
                Strategy::DistributionCopy,
            ),
            Generator::Greedy => stego_grid(
                &pipeline,
                &key,
                derived_seed(seed, "message", i),
                length,
                Strategy::GreedyCopy,
            ),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let rows: Vec<_> = pool.install(|| (0..n).into_par_iter().map(one).collect::<Result<Vec<_>>>())?;
    let mean_capacity = rows.iter().map(|r| r.2 as f64).sum::<f64>() / n.max(1) as f64;
    let (ranks, tokens) = rows.into_iter().map(|(r, t, _)| (r, t)).unzip();
    Ok(Sample {
        generator,
        length,
        ranks,
        tokens,
        mean_capacity,
    })
}

fn rank_counts(rows: &[Vec<u16>], width: usize, position: Option<usize>) -> Vec<u64> {
    let mut counts = vec![0u64; width];
    for row in rows {
        match position {
            Some(p) => counts[row[p] as usize] += 1,
            None => row.iter().for_each(|&r| counts[r as usize] += 1),
        }
    }
    counts
}

fn token_counts(rows: &[Vec<TokenId>], vocab: usize) -> Vec<u64> {
    let mut counts = vec![0u64; vocab];
    for row in rows {
        row.iter().for_each(|&t| counts[t as usize] += 1);
    }
    counts
}

/// Compares `other` against the cover sample `cover`.
pub fn compare(config: &PipelineConfig, cover: &Sample, other: &Sample, seed: u64) -> SecurityReport {
    let width = config.image_model.top_k;
    let vocab = config.image_model.vocab_size;
    let pooled_a = rank_counts(&cover.ranks, width, None);
    let pooled_b = rank_counts(&other.ranks, width, None);
    let p_values: Vec<f64> = (0..cover.length)
        .map(|p| {
            chi_square_homogeneity(
                &rank_counts(&cover.ranks, width, Some(p)),
                &rank_counts(&other.ranks, width, Some(p)),
            )
            .p_value
        })
        .collect();
    SecurityReport {
        generator: other.generator,
        n_samples: other.ranks.len(),
        length: cover.length,
        pooled_rank: chi_square_homogeneity(&pooled_a, &pooled_b),
        pooled_token: chi_square_homogeneity(
            &token_counts(&cover.tokens, vocab),
            &token_counts(&other.tokens, vocab),
        ),
        per_position: ks_uniform(&p_values),
        min_position_p: p_values.iter().copied().fold(1.0, f64::min),
        kl_bits: kl_with_null(&pooled_b, &pooled_a, 200, seed),
        mean_capacity: other.mean_capacity,
    }
}

/// `n` cover grids against `n` grids from `generator`.
pub fn run_security_test(
    config: &PipelineConfig,
    n_samples: usize,
    generator: Generator,
    seed: u64,
    jobs: usize,
) -> Result<SecurityReport> {
    if n_samples < 1000 {
        return Err(Error::InvalidConfig("security test needs at least 1000 samples".into()));
    }
    let cover = sample_class(config, Generator::Cover, n_samples, seed, "reference", jobs)?;
    let other = sample_class(config, generator, n_samples, seed, "candidate", jobs)?;
    Ok(compare(config, &cover, &other, seed))
}
