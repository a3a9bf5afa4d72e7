//! Seeded experiment grids over channel settings or text lengths.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::key::StegoKey;
use crate::pipeline::{seeded_message, Pipeline, RunMetrics};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Channel stages in the `[channel] stages` syntax.
    Channel(String),
    MaxTokens(usize),
}

impl Variant {
    pub fn label(&self) -> String {
        match self {
            Variant::Channel(s) => s.clone(),
            Variant::MaxTokens(n) => format!("max_tokens={n}"),
        }
    }

    fn apply(&self, config: &mut PipelineConfig) {
        match self {
            Variant::Channel(s) => config.channel.stages = s.clone(),
            Variant::MaxTokens(n) => config.text.max_tokens = *n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variants: Vec<Variant>,
    /// Run seeds `first_seed .. first_seed + runs`.
    pub runs: u64,
    pub first_seed: u64,
    pub message_bits: usize,
}

impl SweepSpec {
    /// Variants from `;`-separated channel settings, e.g. `gaussian:0.01;quantize:32`.
    pub fn channels(list: &str, runs: u64, first_seed: u64, message_bits: usize) -> Self {
        Self {
            variants: list
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| Variant::Channel(s.to_owned()))
                .collect(),
            runs,
            first_seed,
            message_bits,
        }
    }

    /// Variants from comma-separated text lengths.
    pub fn max_tokens(list: &str, runs: u64, first_seed: u64, message_bits: usize) -> Result<Self> {
        let variants = list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map(Variant::MaxTokens)
                    .map_err(|_| Error::MalformedInput(format!("bad max_tokens {s:?}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            variants,
            runs,
            first_seed,
            message_bits,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: String,
    pub seed: u64,
    pub metrics: Option<RunMetrics>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    /// `Σ k*` of the stego text, zero without ECC.
    pub fn text_capacity(&self) -> Option<usize> {
        self.metrics.as_ref().map(|m| m.ecc.as_ref().map_or(0, |e| e.text_capacity_bits))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub runs: usize,
    pub failed: usize,
    pub rq_m1: MeanStd,
    pub rq_m12: MeanStd,
    pub rq_m123: MeanStd,
    pub cap: MeanStd,
    pub ecc_bits: MeanStd,
    pub text_capacity: MeanStd,
    /// Runs that broke stage ordering.
    pub non_monotone: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<VariantSummary>,
}

impl SweepTable {
    /// One JSON object per row.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(&serde_json::to_string(row).expect("rows serialize"));
            out.push('\n');
        }
        out
    }

    /// Aligned plain-text view of the summary.
    pub fn render(&self) -> String {
        let width = self.summary.iter().map(|s| s.variant.len()).max().unwrap_or(7).max(7);
        let mut out = format!(
            "{:<width$}  {:>4}  {:>4}  {:>15}  {:>15}  {:>15}  {:>15}  {:>13}  {:>13}\n",
            "variant", "runs", "fail", "Rq M1", "Rq M12", "Rq M123", "Cap", "ECC bits", "text cap"
        );
        let pair = |m: MeanStd, prec: usize| format!("{:.prec$} ± {:.prec$}", m.mean, m.std);
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{:<width$}  {:>4}  {:>4}  {:>15}  {:>15}  {:>15}  {:>15}  {:>13}  {:>13}",
                s.variant,
                s.runs,
                s.failed,
                pair(s.rq_m1, 2),
                pair(s.rq_m12, 2),
                pair(s.rq_m123, 2),
                pair(s.cap, 1),
                pair(s.ecc_bits, 1),
                pair(s.text_capacity, 1),
            );
        }
        out
    }
}

fn summarize(variant: &str, rows: &[&SweepRow]) -> VariantSummary {
    let ok: Vec<&RunMetrics> = rows.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let col = |f: &dyn Fn(&RunMetrics) -> f64| MeanStd::of(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
    VariantSummary {
        variant: variant.to_owned(),
        runs: rows.len(),
        failed: rows.iter().filter(|r| r.failed()).count(),
        rq_m1: col(&|m| m.rq_m1),
        rq_m12: col(&|m| m.rq_m12),
        rq_m123: col(&|m| m.rq_m123),
        cap: col(&|m| m.cap as f64),
        ecc_bits: col(&|m| m.ecc.as_ref().map_or(0.0, |e| e.ecc_bits as f64)),
        text_capacity: col(&|m| m.ecc.as_ref().map_or(0.0, |e| e.text_capacity_bits as f64)),
        non_monotone: ok
            .iter()
            .filter(|m| !(m.rq_m1 <= m.rq_m12 && m.rq_m12 <= m.rq_m123))
            .count(),
    }
}

/// Runs one row: key, message and channel noise all derive from `seed`.
pub fn run_row(config: &PipelineConfig, variant: &Variant, seed: u64, message_bits: usize) -> SweepRow {
    let mut cfg = config.clone();
    variant.apply(&mut cfg);
    cfg.channel.noise_seed = config.channel.noise_seed.wrapping_add(seed);
    cfg.channel.sender_noise_seed = config.channel.sender_noise_seed.map(|s| s.wrapping_add(seed));
    let metrics = Pipeline::new(cfg).and_then(|p| {
        p.run_once(&seeded_message(seed, message_bits), &StegoKey::from_u64(seed), seed)
    });
    let (metrics, error) = match metrics {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    SweepRow {
        variant: variant.label(),
        seed,
        metrics,
        error,
    }
}

/// Every variant × seed, on at most `jobs` threads. Row failures are recorded, not raised.
pub fn run_sweep(config: &PipelineConfig, spec: &SweepSpec, jobs: usize) -> Result<SweepTable> {
    if spec.variants.is_empty() {
        return Err(Error::MalformedInput("sweep lists no variants".into()));
    }
    let cells: Vec<(&Variant, u64)> = spec
        .variants
        .iter()
        .flat_map(|v| (0..spec.runs).map(move |i| (v, spec.first_seed + i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(v, seed)| run_row(config, v, seed, spec.message_bits))
            .collect()
    });
    let summary = spec
        .variants
        .iter()
        .map(|v| {
            let label = v.label();
            let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.variant == label).collect();
            summarize(&label, &mine)
        })
        .collect();
    Ok(SweepTable { rows, summary })
}
