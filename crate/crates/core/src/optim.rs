//! Token recovery by gradient descent on continuous latents.
//!
//! The receiver re-encodes the lossy image, then minimizes
//! `Δx = ‖received − N(G(ẑ))‖₂` over `ẑ` with Adam, where `N` is the differentiable
//! noise layer. Quantization to tokens happens once, after the loop.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSpec, SmoothLayer};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::vq::{LatentGrid, TokenGrid, Tokenizer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Stop once the best loss improved by less than this over `patience` steps.
    pub plateau_tolerance: f64,
    pub patience: usize,
    /// Decode from the quantized latents inside the loop (straight-through).
    pub quantize_in_loop: bool,
    /// Record every n-th loss value in the report trace.
    pub trace_every: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            steps: 2000,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            plateau_tolerance: 1e-10,
            patience: 100,
            quantize_in_loop: false,
            trace_every: 50,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be >= 0".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iterations: usize,
    /// `(step, loss)` samples.
    pub loss_trace: Vec<(usize, f64)>,
    /// Token disagreement with the true grid before and after, when known.
    pub disagreement_before: Option<usize>,
    pub disagreement_after: Option<usize>,
}

impl OptimReport {
    pub fn with_truth(mut self, before: &TokenGrid, after: &TokenGrid, truth: &TokenGrid) -> Self {
        self.disagreement_before = Some(before.disagreement(truth));
        self.disagreement_after = Some(after.disagreement(truth));
        self
    }
}

/// Plain Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

fn check_shapes(latents: &LatentGrid, received: &ImageTensor, tok: &Tokenizer) -> Result<()> {
    let s = tok.spec();
    if (latents.height, latents.width, latents.dim) != (s.grid_height, s.grid_width, s.dim) {
        return Err(Error::ShapeMismatch("latents do not match tokenizer".into()));
    }
    if received.shape() != (s.image_height(), s.image_width(), s.channels) {
        return Err(Error::ShapeMismatch("received image does not match tokenizer".into()));
    }
    Ok(())
}

/// `Δx` for raw latents.
pub fn loss(
    latents: &LatentGrid,
    received: &ImageTensor,
    layer: &impl SmoothLayer,
    tok: &Tokenizer,
) -> Result<f64> {
    check_shapes(latents, received, tok)?;
    let recovered = layer.forward_smooth(&tok.decode_continuous(latents)?).0;
    Ok(received.l2_distance(&recovered))
}

/// `Δx` and its gradient with respect to the latents.
pub fn loss_and_gradient(
    latents: &LatentGrid,
    received: &ImageTensor,
    layer: &impl SmoothLayer,
    tok: &Tokenizer,
) -> Result<(f64, LatentGrid)> {
    check_shapes(latents, received, tok)?;
    let decoded = tok.decode_continuous(latents)?;
    let (recovered, trace) = layer.forward_smooth(&decoded);
    let residual: Vec<f64> = recovered
        .data()
        .iter()
        .zip(received.data())
        .map(|(a, b)| a - b)
        .collect();
    let norm = residual.iter().map(|r| r * r).sum::<f64>().sqrt();
    if norm == 0.0 {
        // The norm is not differentiable at zero; zero is a valid subgradient.
        return Ok((0.0, LatentGrid::zeros(latents.height, latents.width, latents.dim)));
    }
    let grad_out: Vec<f64> = residual.iter().map(|r| r / norm).collect();
    let grad_img = layer.backward_smooth(&trace, &grad_out);
    Ok((norm, tok.decode_backward(&decoded, &grad_img)))
}

pub fn gradient(
    latents: &LatentGrid,
    received: &ImageTensor,
    layer: &impl SmoothLayer,
    tok: &Tokenizer,
) -> Result<LatentGrid> {
    loss_and_gradient(latents, received, layer, tok).map(|(_, g)| g)
}

#[derive(Clone, Debug)]
pub struct OptimOutcome {
    pub grid: TokenGrid,
    /// Grid from plain re-encoding, before any optimization.
    pub initial_grid: TokenGrid,
    pub latents: LatentGrid,
    pub report: OptimReport,
}

/// Re-encodes `received`, refines the latents with Adam, and quantizes the best iterate.
pub fn optimize_tokens(
    received: &ImageTensor,
    layer: &ChannelSpec,
    tok: &Tokenizer,
    config: &OptimConfig,
) -> Result<OptimOutcome> {
    config.validate()?;
    let layer = layer.prepare(received.shape());
    let layer = &layer;
    let init = tok.encode(received)?;
    let initial_grid = tok.quantize(&init)?;

    let eval = |z: &LatentGrid| -> Result<(f64, LatentGrid)> {
        if config.quantize_in_loop {
            let snapped = LatentGrid::from_tokens(&tok.quantize(z)?, tok.codebook())?;
            loss_and_gradient(&snapped, received, layer, tok)
        } else {
            loss_and_gradient(z, received, layer, tok)
        }
    };

    let mut z = init.clone();
    let mut adam = Adam::new(
        z.data.len(),
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
    );
    let mut report = OptimReport::default();
    let mut best = (f64::INFINITY, z.clone());
    let mut plateau_ref = f64::INFINITY;
    let mut since_ref = 0;
    let mut iterations = 0;

    for step in 0..config.steps {
        let (value, grad) = eval(&z)?;
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss(step));
        }
        if step == 0 {
            report.initial_loss = value;
        }
        if step % config.trace_every.max(1) == 0 {
            report.loss_trace.push((step, value));
        }
        if value < best.0 {
            best = (value, z.clone());
        }
        if value == 0.0 || config.learning_rate == 0.0 {
            break;
        }
        if plateau_ref - best.0 >= config.plateau_tolerance {
            plateau_ref = best.0;
            since_ref = 0;
        } else {
            since_ref += 1;
            if since_ref >= config.patience {
                break;
            }
        }
        adam.step(&mut z.data, &grad.data);
        iterations = step + 1;
    }

    let (best_loss, best_z) = best;
    report.final_loss = best_loss;
    report.iterations = iterations;
    let grid = tok.quantize(&best_z)?;
    Ok(OptimOutcome {
        grid,
        initial_grid,
        latents: best_z,
        report,
    })
}
