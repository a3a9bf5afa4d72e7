//! Error-correction side information for residual token errors.
//!
//! Wire format, big-endian bit order:
//!
//! ```text
//! first record:  position (L bits)  rank (λ2 bits)
//! later records: Δposition (λ1 bits)  rank (λ2 bits)
//! ```
//!
//! `L = floor(log2(h·w))`. The rank is the index of the true token among the model's
//! top-k candidates at that position, sorted by codebook distance to the wrongly
//! recovered token. Records are in ascending position order and ranks are taken
//! against the already-corrected prefix, so the receiver can replay the walk.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::model::{next_distribution, Condition, ModelSpec, TokenId};
use crate::vq::{sq_dist, Codebook, TokenGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EccParams {
    /// Bits per relative coordinate.
    pub lambda1: u32,
    /// Bits per proximity rank.
    pub lambda2: u32,
    /// Bits of the first, absolute position.
    pub position_bits: u32,
}

impl Default for EccParams {
    fn default() -> Self {
        Self::for_cells(576)
    }
}

impl EccParams {
    pub fn for_cells(cells: usize) -> Self {
        Self {
            lambda1: 8,
            lambda2: 8,
            position_bits: cells.max(2).ilog2(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |b: u32| (1..=32).contains(&b);
        if !(ok(self.lambda1) && ok(self.lambda2) && ok(self.position_bits)) {
            return Err(Error::InvalidConfig("ECC widths must lie in 1..=32".into()));
        }
        Ok(())
    }

    pub fn first_record_bits(&self) -> usize {
        (self.position_bits + self.lambda2) as usize
    }

    pub fn record_bits(&self) -> usize {
        (self.lambda1 + self.lambda2) as usize
    }

    /// Bits needed for `n` records.
    pub fn cost(&self, n: usize) -> usize {
        match n {
            0 => 0,
            n => self.first_record_bits() + (n - 1) * self.record_bits(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub position: usize,
    /// Distance to the previous record; the absolute position for the first.
    pub delta: u32,
    pub rank: u32,
    pub true_token: TokenId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TruncationCause {
    Gap,
    RankOverflow,
    Budget,
    Unaddressable,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecordList {
    pub records: Vec<ErrorRecord>,
    /// First error left uncorrected, and why.
    pub truncated_at: Option<(usize, TruncationCause)>,
}

impl ErrorRecordList {
    pub fn first_abs_position(&self) -> Option<usize> {
        self.records.first().map(|r| r.position)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EccEncoding {
    pub bits: BitString,
    pub records: ErrorRecordList,
    /// Errors present before correction.
    pub total_errors: usize,
}

impl EccEncoding {
    pub fn corrected(&self) -> usize {
        self.records.len()
    }
}

/// Row-major positions where the grids disagree, with the true token.
pub fn diff_tokens(truth: &TokenGrid, recovered: &TokenGrid) -> Result<Vec<(usize, TokenId)>> {
    if (truth.height, truth.width) != (recovered.height, recovered.width) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            truth.height, truth.width, recovered.height, recovered.width
        )));
    }
    Ok(truth
        .indices
        .iter()
        .zip(&recovered.indices)
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(i, (&a, _))| (i, a))
        .collect())
}

/// Candidates sorted by distance to `anchor`, ties by id.
pub fn proximity_order(candidates: &[TokenId], anchor: &[f64], book: &Codebook) -> Vec<TokenId> {
    let mut keyed: Vec<(f64, TokenId)> = candidates
        .iter()
        .map(|&t| (sq_dist(book.vector(t as usize), anchor), t))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, t)| t).collect()
}

fn candidate_order(
    position: usize,
    wrong: TokenId,
    prefix: &[TokenId],
    model: &ModelSpec,
    condition: Condition,
    book: &Codebook,
) -> Result<Vec<TokenId>> {
    if wrong as usize >= book.size() {
        return Err(Error::IndexOutOfRange {
            index: wrong,
            size: book.size(),
        });
    }
    let dist = next_distribution(model, condition, prefix, position)?;
    Ok(proximity_order(dist.tokens(), book.vector(wrong as usize), book))
}

/// Rank of `true_token` under vector proximity to `wrong_token`; `None` on overflow.
#[allow(clippy::too_many_arguments)]
pub fn proximity_rank(
    position: usize,
    wrong_token: TokenId,
    true_token: TokenId,
    corrected_prefix: &[TokenId],
    model: &ModelSpec,
    condition: Condition,
    book: &Codebook,
    params: &EccParams,
) -> Result<Option<u32>> {
    let order = candidate_order(position, wrong_token, corrected_prefix, model, condition, book)?;
    Ok(order
        .iter()
        .position(|&t| t == true_token)
        .map(|r| r as u32)
        .filter(|&r| (r as u64) < 1u64 << params.lambda2))
}

#[allow(clippy::too_many_arguments)]
pub fn ecc_encode(
    truth: &TokenGrid,
    recovered: &TokenGrid,
    model: &ModelSpec,
    condition: Condition,
    book: &Codebook,
    params: &EccParams,
    budget_bits: usize,
) -> Result<EccEncoding> {
    params.validate()?;
    let errors = diff_tokens(truth, recovered)?;
    let mut list = ErrorRecordList::default();
    let mut bits = BitString::new();
    let mut previous: Option<usize> = None;

    for &(position, true_token) in &errors {
        let (delta, width) = match previous {
            None => (position as u64, params.position_bits),
            Some(p) => ((position - p) as u64, params.lambda1),
        };
        if delta >> width != 0 {
            let cause = if previous.is_none() {
                TruncationCause::Unaddressable
            } else {
                TruncationCause::Gap
            };
            list.truncated_at = Some((position, cause));
            break;
        }
        if bits.len() + (width + params.lambda2) as usize > budget_bits {
            list.truncated_at = Some((position, TruncationCause::Budget));
            break;
        }
        // Every earlier error is already fixed, so the corrected prefix is the truth.
        let wrong = recovered.indices[position];
        let rank = match proximity_rank(
            position,
            wrong,
            true_token,
            &truth.indices[..position],
            model,
            condition,
            book,
            params,
        )? {
            Some(r) => r,
            None => {
                list.truncated_at = Some((position, TruncationCause::RankOverflow));
                break;
            }
        };
        bits.push_uint(delta, width);
        bits.push_uint(rank as u64, params.lambda2);
        list.records.push(ErrorRecord {
            position,
            delta: delta as u32,
            rank,
            true_token,
        });
        previous = Some(position);
    }

    Ok(EccEncoding {
        bits,
        records: list,
        total_errors: errors.len(),
    })
}

/// Applies the corrections in `ecc_bits` to `recovered`.
pub fn ecc_decode(
    ecc_bits: &BitString,
    recovered: &TokenGrid,
    model: &ModelSpec,
    condition: Condition,
    book: &Codebook,
    params: &EccParams,
) -> Result<TokenGrid> {
    ecc_decode_records(ecc_bits, recovered, model, condition, book, params).map(|(g, _)| g)
}

/// Like [`ecc_decode`], also returning the corrected positions.
pub fn ecc_decode_records(
    ecc_bits: &BitString,
    recovered: &TokenGrid,
    model: &ModelSpec,
    condition: Condition,
    book: &Codebook,
    params: &EccParams,
) -> Result<(TokenGrid, Vec<usize>)> {
    params.validate()?;
    let mut grid = recovered.clone();
    let mut positions = Vec::new();
    if ecc_bits.is_empty() {
        return Ok((grid, positions));
    }
    let n = ecc_bits.len();
    if n < params.first_record_bits() || (n - params.first_record_bits()) % params.record_bits() != 0
    {
        return Err(Error::MalformedEcc(format!("{n} bits is not a whole number of records")));
    }

    let mut reader = ecc_bits.reader();
    let mut previous: Option<usize> = None;
    while reader.remaining() > 0 {
        let position = match previous {
            None => reader.read_uint(params.position_bits).expect("length checked") as usize,
            Some(p) => {
                let delta = reader.read_uint(params.lambda1).expect("length checked") as usize;
                if delta == 0 {
                    return Err(Error::MalformedEcc("zero relative coordinate".into()));
                }
                p + delta
            }
        };
        let rank = reader.read_uint(params.lambda2).expect("length checked") as usize;
        if position >= grid.len() {
            return Err(Error::MalformedEcc(format!("position {position} outside the grid")));
        }
        let wrong = grid.indices[position];
        let order = candidate_order(position, wrong, &grid.indices[..position], model, condition, book)?;
        let &token = order
            .get(rank)
            .ok_or_else(|| Error::MalformedEcc(format!("rank {rank} beyond {} candidates", order.len())))?;
        grid.indices[position] = token;
        positions.push(position);
        previous = Some(position);
    }
    Ok((grid, positions))
}

/// Number of correctable errors for a text payload: the closed-form estimate and the
/// exact count under this module's layout.
pub fn capacity_tau(params: &EccParams, payload_bits: usize) -> (i64, usize) {
    let l = params.position_bits as f64;
    let l1 = params.lambda1 as f64;
    let l2 = params.lambda2 as f64;
    let formula = (1.0 + (payload_bits as f64 - l + l2) / (l1 + l2)).floor() as i64;
    let layout = if payload_bits < params.first_record_bits() {
        0
    } else {
        1 + (payload_bits - params.first_record_bits()) / params.record_bits()
    };
    (formula, layout)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub max: u64,
    /// Mean minimal binary length of the values.
    pub mean_bits: f64,
}

impl Summary {
    pub fn of(values: &[u64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<u64>() as f64 / n;
        let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        Self {
            count: values.len(),
            mean,
            std: var.sqrt(),
            max: values.iter().copied().max().unwrap_or(0),
            mean_bits: values.iter().map(|&v| bit_length(v) as f64).sum::<f64>() / n,
        }
    }
}

fn bit_length(v: u64) -> u32 {
    (64 - v.leading_zeros()).max(1)
}

/// Side-by-side statistics for the position and rank encodings of a set of errors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EccStats {
    pub absolute_positions: Summary,
    pub relative_coordinates: Summary,
    pub probability_ranks: Summary,
    pub proximity_ranks: Summary,
}

/// Statistics over every error between the grids, ignoring width limits. Errors whose
/// true token is outside the candidate set are skipped for the rank columns.
pub fn error_stats(
    truth: &TokenGrid,
    recovered: &TokenGrid,
    model: &ModelSpec,
    condition: Condition,
    book: &Codebook,
) -> Result<EccStats> {
    let errors = diff_tokens(truth, recovered)?;
    let mut absolute = Vec::new();
    let mut relative = Vec::new();
    let mut by_prob = Vec::new();
    let mut by_proximity = Vec::new();
    let mut previous = None;
    for &(position, true_token) in &errors {
        absolute.push(position as u64);
        relative.push(previous.map_or(position, |p| position - p) as u64);
        previous = Some(position);
        let prefix = &truth.indices[..position];
        let dist = next_distribution(model, condition, prefix, position)?;
        if let Some(r) = dist.index_of(true_token) {
            by_prob.push(r as u64);
            let wrong = recovered.indices[position];
            let order = proximity_order(dist.tokens(), book.vector(wrong as usize), book);
            let p = order.iter().position(|&t| t == true_token).expect("same candidate set");
            by_proximity.push(p as u64);
        }
    }
    Ok(EccStats {
        absolute_positions: Summary::of(&absolute),
        relative_coordinates: Summary::of(&relative),
        probability_ranks: Summary::of(&by_prob),
        proximity_ranks: Summary::of(&by_proximity),
    })
}

/// Synthetic residual errors: `bursts` runs of nearby positions, each wrong token one
/// of the `neighbours` codebook entries closest to the true one.
pub fn clustered_corruption(
    truth: &TokenGrid,
    book: &Codebook,
    bursts: usize,
    burst_len: usize,
    neighbours: usize,
    seed: u64,
) -> TokenGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = truth.clone();
    let n = truth.len();
    let all: Vec<TokenId> = (0..book.size() as TokenId).collect();
    for _ in 0..bursts {
        let start = rng.random_range(0..n);
        for k in 0..burst_len {
            let pos = start + k * rng.random_range(1..=3);
            if pos >= n {
                break;
            }
            let t = truth.indices[pos];
            let near = proximity_order(&all, book.vector(t as usize), book);
            let choices = &near[1..=neighbours.min(near.len() - 1)];
            out.indices[pos] = *choices.choose(&mut rng).expect("non-empty");
        }
    }
    out
}
