//! Lossy channel simulation and its differentiable surrogate.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// Width of the smooth knee used instead of hard clamping in [`ChannelSpec::forward_smooth`].
pub const SOFT_CLIP_KNEE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stage {
    Gaussian(f64),
    Quantize(u32),
    Rescale(f64),
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Gaussian(s) => write!(f, "gaussian:{s}"),
            Stage::Quantize(l) => write!(f, "quantize:{l}"),
            Stage::Rescale(r) => write!(f, "rescale:{r}"),
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("bad channel stage {s:?}"));
        let (name, arg) = s.trim().split_once(':').ok_or_else(bad)?;
        let stage = match name.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "gn" => Stage::Gaussian(arg.trim().parse().map_err(|_| bad())?),
            "quantize" | "q" => Stage::Quantize(arg.trim().parse().map_err(|_| bad())?),
            "rescale" | "scale" => Stage::Rescale(arg.trim().parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        stage.validate()?;
        Ok(stage)
    }
}

impl Stage {
    fn validate(&self) -> Result<()> {
        match *self {
            Stage::Gaussian(s) if !(s >= 0.0 && s.is_finite()) => {
                Err(Error::InvalidConfig(format!("gaussian sigma {s} must be >= 0")))
            }
            Stage::Quantize(l) if l < 2 => {
                Err(Error::InvalidConfig(format!("quantize levels {l} must be >= 2")))
            }
            Stage::Rescale(f) if !(f > 0.0 && f.is_finite()) => {
                Err(Error::InvalidConfig(format!("rescale factor {f} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Ordered noise stages plus the seed for stochastic ones.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChannelSpec {
    pub stages: Vec<Stage>,
    pub noise_seed: u64,
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.stages.is_empty() {
            return f.write_str("none");
        }
        for (i, s) in self.stages.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Parses `"gaussian:0.01,quantize:32,rescale:0.5"`; `"none"` or `""` is lossless.
pub fn parse_stages(text: &str) -> Result<Vec<Stage>> {
    let text = text.trim();
    if text.is_empty() || text.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    text.split(',').map(str::parse).collect()
}

/// Handling of Gaussian stages inside the optimizer's noise layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaussianSurrogate {
    /// One fixed realization drawn from the layer's own seed.
    #[default]
    Frozen,
    /// Zero-mean noise replaced by its expectation (stage dropped).
    Mean,
}

impl ChannelSpec {
    pub fn new(stages: Vec<Stage>, noise_seed: u64) -> Self {
        Self { stages, noise_seed }
    }

    pub fn lossless() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, noise_seed: u64) -> Result<Self> {
        Ok(Self::new(parse_stages(text)?, noise_seed))
    }

    pub fn is_lossless(&self) -> bool {
        self.stages.iter().all(|s| match *s {
            Stage::Gaussian(sigma) => sigma == 0.0,
            Stage::Rescale(f) => f == 1.0,
            Stage::Quantize(_) => false,
        })
    }

    /// Noise layer for the optimizer, modelled on this channel.
    pub fn surrogate(&self, gaussian: GaussianSurrogate, seed: u64) -> ChannelSpec {
        let stages = self
            .stages
            .iter()
            .copied()
            .filter(|s| !(gaussian == GaussianSurrogate::Mean && matches!(s, Stage::Gaussian(_))))
            .collect();
        ChannelSpec::new(stages, seed)
    }

    fn stage_rng(&self, stage: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(
            self.noise_seed ^ (stage as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        )
    }

    /// The real channel: stages in order, then clamp to `[-1, 1]`.
    pub fn apply(&self, image: &ImageTensor) -> ImageTensor {
        let (h, w, c) = image.shape();
        let mut data = image.data().to_vec();
        for (i, stage) in self.stages.iter().enumerate() {
            self.forward_stage(i, *stage, &mut data, (h, w, c));
        }
        for v in &mut data {
            *v = v.clamp(-1.0, 1.0);
        }
        ImageTensor::from_vec(h, w, c, data).expect("shape preserved")
    }

    fn stage_noise(&self, i: usize, sigma: f64, n: usize) -> Vec<f64> {
        let mut rng = self.stage_rng(i);
        let normal = Normal::new(0.0, sigma).expect("sigma validated");
        (0..n).map(|_| normal.sample(&mut rng)).collect()
    }

    fn forward_stage(&self, i: usize, stage: Stage, data: &mut Vec<f64>, shape: (usize, usize, usize)) {
        match stage {
            Stage::Gaussian(sigma) => {
                if sigma > 0.0 {
                    let noise = self.stage_noise(i, sigma, data.len());
                    for (v, n) in data.iter_mut().zip(noise) {
                        *v += n;
                    }
                }
            }
            Stage::Quantize(levels) => {
                for v in data.iter_mut() {
                    *v = quantize_level(*v, levels);
                }
            }
            Stage::Rescale(f) => {
                if f != 1.0 {
                    *data = Rescaler::new(shape, f).forward(data);
                }
            }
        }
    }

    /// Differentiable surrogate: quantization is straight-through and the final clamp
    /// is a smooth soft clip. Returns the output and the pre-clip values.
    pub fn forward_smooth(&self, image: &ImageTensor) -> (ImageTensor, SmoothTrace) {
        let (h, w, c) = image.shape();
        let mut data = image.data().to_vec();
        for (i, stage) in self.stages.iter().enumerate() {
            self.forward_stage(i, *stage, &mut data, (h, w, c));
        }
        let out: Vec<f64> = data.iter().map(|&v| soft_clip(v)).collect();
        (
            ImageTensor::from_vec(h, w, c, out).expect("shape preserved"),
            SmoothTrace {
                pre_clip: data,
                shape: (h, w, c),
            },
        )
    }

    pub fn apply_smooth(&self, image: &ImageTensor) -> ImageTensor {
        self.forward_smooth(image).0
    }

    /// The smooth surrogate with noise realizations drawn once, for repeated use on
    /// images of one shape.
    pub fn prepare(&self, shape: (usize, usize, usize)) -> PreparedChannel {
        let n = shape.0 * shape.1 * shape.2;
        let noise = self
            .stages
            .iter()
            .enumerate()
            .map(|(i, s)| match *s {
                Stage::Gaussian(sigma) if sigma > 0.0 => Some(self.stage_noise(i, sigma, n)),
                _ => None,
            })
            .collect();
        PreparedChannel {
            spec: self.clone(),
            shape,
            noise,
        }
    }

    /// Vector-Jacobian product of [`Self::forward_smooth`]. Gaussian and quantize
    /// stages pass the gradient through unchanged.
    pub fn backward_smooth(&self, trace: &SmoothTrace, grad_out: &[f64]) -> Vec<f64> {
        let mut grad: Vec<f64> = grad_out
            .iter()
            .zip(&trace.pre_clip)
            .map(|(g, &v)| g * soft_clip_derivative(v))
            .collect();
        for stage in self.stages.iter().rev() {
            if let Stage::Rescale(f) = *stage {
                if f != 1.0 {
                    grad = Rescaler::new(trace.shape, f).transpose(&grad);
                }
            }
        }
        grad
    }

    /// Per-stage upper bounds on `‖out − in‖₂` for an input in `[-1, 1]` with `n`
    /// values. Gaussian bounds hold at three standard deviations of `‖noise‖²`.
    pub fn stage_bounds(&self, n: usize) -> Vec<f64> {
        let n = n as f64;
        self.stages
            .iter()
            .map(|s| match *s {
                Stage::Gaussian(sigma) => sigma * (n + 3.0 * (2.0 * n).sqrt()).sqrt(),
                Stage::Quantize(levels) => n.sqrt() / (levels - 1) as f64,
                Stage::Rescale(f) if f == 1.0 => 0.0,
                Stage::Rescale(_) => 2.0 * n.sqrt(),
            })
            .collect()
    }
}

/// A differentiable noise layer.
pub trait SmoothLayer {
    fn forward_smooth(&self, image: &ImageTensor) -> (ImageTensor, SmoothTrace);
    fn backward_smooth(&self, trace: &SmoothTrace, grad_out: &[f64]) -> Vec<f64>;
}

impl SmoothLayer for ChannelSpec {
    fn forward_smooth(&self, image: &ImageTensor) -> (ImageTensor, SmoothTrace) {
        ChannelSpec::forward_smooth(self, image)
    }

    fn backward_smooth(&self, trace: &SmoothTrace, grad_out: &[f64]) -> Vec<f64> {
        ChannelSpec::backward_smooth(self, trace, grad_out)
    }
}

impl SmoothLayer for PreparedChannel {
    fn forward_smooth(&self, image: &ImageTensor) -> (ImageTensor, SmoothTrace) {
        PreparedChannel::forward_smooth(self, image)
    }

    fn backward_smooth(&self, trace: &SmoothTrace, grad_out: &[f64]) -> Vec<f64> {
        PreparedChannel::backward_smooth(self, trace, grad_out)
    }
}

/// See [`ChannelSpec::prepare`].
#[derive(Clone, Debug)]
pub struct PreparedChannel {
    spec: ChannelSpec,
    shape: (usize, usize, usize),
    noise: Vec<Option<Vec<f64>>>,
}

impl PreparedChannel {
    pub fn spec(&self) -> &ChannelSpec {
        &self.spec
    }

    /// Same values as [`ChannelSpec::forward_smooth`].
    pub fn forward_smooth(&self, image: &ImageTensor) -> (ImageTensor, SmoothTrace) {
        assert_eq!(image.shape(), self.shape, "prepared for another shape");
        let (h, w, c) = self.shape;
        let mut data = image.data().to_vec();
        for (i, stage) in self.spec.stages.iter().enumerate() {
            match (&self.noise[i], *stage) {
                (Some(noise), _) => data.iter_mut().zip(noise).for_each(|(v, n)| *v += n),
                (None, Stage::Gaussian(_)) => {}
                (None, s) => self.spec.forward_stage(i, s, &mut data, self.shape),
            }
        }
        let out: Vec<f64> = data.iter().map(|&v| soft_clip(v)).collect();
        (
            ImageTensor::from_vec(h, w, c, out).expect("shape preserved"),
            SmoothTrace {
                pre_clip: data,
                shape: self.shape,
            },
        )
    }

    pub fn apply_smooth(&self, image: &ImageTensor) -> ImageTensor {
        self.forward_smooth(image).0
    }

    pub fn backward_smooth(&self, trace: &SmoothTrace, grad_out: &[f64]) -> Vec<f64> {
        self.spec.backward_smooth(trace, grad_out)
    }
}

#[derive(Clone, Debug)]
pub struct SmoothTrace {
    pre_clip: Vec<f64>,
    shape: (usize, usize, usize),
}

/// Uniform quantizer to `levels` values spanning `[-1, 1]`.
pub fn quantize_level(v: f64, levels: u32) -> f64 {
    let top = (levels - 1) as f64;
    let q = ((v + 1.0) / 2.0 * top).round().clamp(0.0, top);
    q / top * 2.0 - 1.0
}

/// Identity on `[-1, 1]`; beyond it the value bends smoothly toward `±(1 + knee)`.
pub fn soft_clip(v: f64) -> f64 {
    if v.abs() <= 1.0 {
        v
    } else {
        v.signum() * (1.0 + SOFT_CLIP_KNEE * ((v.abs() - 1.0) / SOFT_CLIP_KNEE).tanh())
    }
}

pub fn soft_clip_derivative(v: f64) -> f64 {
    if v.abs() <= 1.0 {
        1.0
    } else {
        let t = ((v.abs() - 1.0) / SOFT_CLIP_KNEE).tanh();
        1.0 - t * t
    }
}

/// Linear interpolation taps for resizing one axis from `n` to `m` samples, using
/// pixel-centre alignment.
fn axis_taps(n: usize, m: usize) -> Vec<(usize, usize, f64)> {
    (0..m)
        .map(|i| {
            let src = ((i as f64 + 0.5) * n as f64 / m as f64 - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear resize to `round(f·H) × round(f·W)` and back to `H × W`.
struct Rescaler {
    shape: (usize, usize, usize),
    mid: (usize, usize),
}

impl Rescaler {
    fn new(shape: (usize, usize, usize), f: f64) -> Self {
        let (h, w, _) = shape;
        let mh = ((h as f64 * f).round() as usize).max(1);
        let mw = ((w as f64 * f).round() as usize).max(1);
        Self {
            shape,
            mid: (mh, mw),
        }
    }

    fn forward(&self, data: &[f64]) -> Vec<f64> {
        let (h, w, c) = self.shape;
        let (mh, mw) = self.mid;
        let down = resize(data, (h, w, c), (mh, mw));
        resize(&down, (mh, mw, c), (h, w))
    }

    fn transpose(&self, grad: &[f64]) -> Vec<f64> {
        let (h, w, c) = self.shape;
        let (mh, mw) = self.mid;
        let g_mid = resize_transpose(grad, (mh, mw, c), (h, w));
        resize_transpose(&g_mid, (h, w, c), (mh, mw))
    }
}

fn resize(data: &[f64], (h, w, c): (usize, usize, usize), (nh, nw): (usize, usize)) -> Vec<f64> {
    let tx = axis_taps(w, nw);
    let ty = axis_taps(h, nh);
    let mut tmp = vec![0.0; h * nw * c];
    for y in 0..h {
        for (x, &(x0, x1, t)) in tx.iter().enumerate() {
            for ch in 0..c {
                let a = data[(y * w + x0) * c + ch];
                let b = data[(y * w + x1) * c + ch];
                tmp[(y * nw + x) * c + ch] = (1.0 - t) * a + t * b;
            }
        }
    }
    let mut out = vec![0.0; nh * nw * c];
    for (y, &(y0, y1, t)) in ty.iter().enumerate() {
        for x in 0..nw {
            for ch in 0..c {
                let a = tmp[(y0 * nw + x) * c + ch];
                let b = tmp[(y1 * nw + x) * c + ch];
                out[(y * nw + x) * c + ch] = (1.0 - t) * a + t * b;
            }
        }
    }
    out
}

/// Adjoint of [`resize`]: maps a gradient on the `nh × nw` output back to `h × w`.
fn resize_transpose(
    grad: &[f64],
    (h, w, c): (usize, usize, usize),
    (nh, nw): (usize, usize),
) -> Vec<f64> {
    let tx = axis_taps(w, nw);
    let ty = axis_taps(h, nh);
    let mut tmp = vec![0.0; h * nw * c];
    for (y, &(y0, y1, t)) in ty.iter().enumerate() {
        for x in 0..nw {
            for ch in 0..c {
                let g = grad[(y * nw + x) * c + ch];
                tmp[(y0 * nw + x) * c + ch] += (1.0 - t) * g;
                tmp[(y1 * nw + x) * c + ch] += t * g;
            }
        }
    }
    let mut out = vec![0.0; h * w * c];
    for y in 0..h {
        for (x, &(x0, x1, t)) in tx.iter().enumerate() {
            for ch in 0..c {
                let g = tmp[(y * nw + x) * c + ch];
                out[(y * w + x0) * c + ch] += (1.0 - t) * g;
                out[(y * w + x1) * c + ch] += t * g;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn test_image(seed: u64) -> ImageTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..32 * 32 * 3).map(|_| rng.random_range(-0.9..0.9)).collect();
        ImageTensor::from_vec(32, 32, 3, data).unwrap()
    }

    #[test]
    fn parse_and_display() {
        let spec = ChannelSpec::parse("gaussian:0.01,quantize:32,rescale:0.5", 1).unwrap();
        assert_eq!(
            spec.stages,
            vec![Stage::Gaussian(0.01), Stage::Quantize(32), Stage::Rescale(0.5)]
        );
        assert_eq!(spec.to_string(), "gaussian:0.01,quantize:32,rescale:0.5");
        assert!(ChannelSpec::parse("none", 0).unwrap().stages.is_empty());
        assert!(ChannelSpec::parse("quantize:1", 0).is_err());
        assert!(ChannelSpec::parse("gaussian:-1", 0).is_err());
        assert!(ChannelSpec::parse("blur:3", 0).is_err());
    }

    #[test]
    fn empty_is_identity() {
        let img = test_image(1);
        assert_eq!(ChannelSpec::lossless().apply(&img), img);
    }

    #[test]
    fn quantize_two_levels() {
        assert_eq!(quantize_level(0.3, 2), 1.0);
        assert_eq!(quantize_level(-0.3, 2), -1.0);
        assert_eq!(quantize_level(0.0, 3), 0.0);
    }

    #[test]
    fn rescale_one_is_identity() {
        let img = test_image(2);
        assert_eq!(ChannelSpec::new(vec![Stage::Rescale(1.0)], 0).apply(&img), img);
    }

    #[test]
    fn gaussian_std() {
        let img = ImageTensor::zeros(100, 100, 10);
        let out = ChannelSpec::new(vec![Stage::Gaussian(0.01)], 5).apply(&img);
        let n = out.data().len() as f64;
        let mean = out.data().iter().sum::<f64>() / n;
        let std = (out.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std - 0.01).abs() < 0.0005, "std {std}");
    }

    #[test]
    fn deterministic_given_seed() {
        let img = test_image(3);
        let spec = ChannelSpec::parse("gaussian:0.05,rescale:0.5", 9).unwrap();
        assert_eq!(spec.apply(&img), spec.apply(&img));
        let other = ChannelSpec::parse("gaussian:0.05,rescale:0.5", 10).unwrap();
        assert_ne!(spec.apply(&img), other.apply(&img));
    }

    #[test]
    fn smooth_matches_hard_inside_range() {
        let img = test_image(4);
        let spec = ChannelSpec::parse("gaussian:0.01", 2).unwrap();
        // Inputs stay inside (-0.95, 0.95), so the clip never engages.
        assert_eq!(spec.apply(&img), spec.apply_smooth(&img));
    }

    #[test]
    fn straight_through_quantize_has_identity_jacobian() {
        let img = test_image(5);
        let spec = ChannelSpec::parse("quantize:16", 0).unwrap();
        let (out, trace) = spec.forward_smooth(&img);
        assert_eq!(out, spec.apply(&img));
        let g: Vec<f64> = (0..img.data().len()).map(|i| (i % 7) as f64 - 3.0).collect();
        assert_eq!(spec.backward_smooth(&trace, &g), g);
    }

    /// Finite-difference check of the vector-Jacobian product for a scalar loss
    /// `L = Σ wᵢ yᵢ²` through the smooth channel.
    #[test]
    fn smooth_gradient_matches_finite_differences() {
        for text in ["gaussian:0.2", "rescale:0.5", "rescale:2.0,gaussian:0.1"] {
            let spec = ChannelSpec::parse(text, 3).unwrap();
            let img = test_image(6);
            let weights: Vec<f64> = (0..img.data().len()).map(|i| 1.0 + (i % 5) as f64).collect();
            let loss = |x: &ImageTensor| -> f64 {
                spec.apply_smooth(x)
                    .data()
                    .iter()
                    .zip(&weights)
                    .map(|(y, w)| w * y * y)
                    .sum()
            };
            let (out, trace) = spec.forward_smooth(&img);
            let gy: Vec<f64> = out.data().iter().zip(&weights).map(|(y, w)| 2.0 * w * y).collect();
            let gx = spec.backward_smooth(&trace, &gy);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let h = 1e-4;
            for _ in 0..30 {
                let i = rng.random_range(0..img.data().len());
                let mut plus = img.clone();
                plus.data_mut()[i] += h;
                let mut minus = img.clone();
                minus.data_mut()[i] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let rel = (fd - gx[i]).abs() / fd.abs().max(gx[i].abs()).max(1e-12);
                assert!(rel < 1e-5, "{text}: index {i} fd {fd} analytic {} rel {rel}", gx[i]);
            }
        }
    }

    #[test]
    fn resize_transpose_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (h, w, c) = (12, 10, 2);
        for (nh, nw) in [(6, 5), (24, 20), (7, 13)] {
            let x: Vec<f64> = (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..nh * nw * c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ax = resize(&x, (h, w, c), (nh, nw));
            let aty = resize_transpose(&y, (h, w, c), (nh, nw));
            let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn stage_energy_bounds() {
        let img = test_image(9);
        let n = img.data().len();
        for text in ["gaussian:0.02", "quantize:16", "rescale:0.5", "rescale:2.0", "gaussian:0.1"] {
            let spec = ChannelSpec::parse(text, 11).unwrap();
            let bound = spec.stage_bounds(n)[0];
            let dist = spec.apply(&img).l2_distance(&img);
            assert!(dist <= bound, "{text}: {dist} > {bound}");
        }
    }

    #[test]
    fn soft_clip_is_continuous_and_bounded() {
        for v in [-3.0, -1.0, -0.5, 0.0, 0.999, 1.0, 1.0001, 2.0, 50.0] {
            let s = soft_clip(v);
            assert!(s.abs() <= 1.0 + SOFT_CLIP_KNEE);
        }
        assert!((soft_clip(1.0 + 1e-9) - (1.0 + 1e-9)).abs() < 1e-12);
        assert_eq!(soft_clip_derivative(0.5), 1.0);
    }

    #[test]
    fn prepared_matches_direct() {
        let img = ImageTensor::from_vec(8, 8, 3, (0..192).map(|i| ((i as f64) * 0.13).sin()).collect())
            .unwrap();
        let ch = ChannelSpec::parse("gaussian:0.05,quantize:16,rescale:0.5,gaussian:0.01", 9).unwrap();
        let prep = ch.prepare(img.shape());
        let (a, ta) = ch.forward_smooth(&img);
        let (b, tb) = prep.forward_smooth(&img);
        assert_eq!(a, b);
        let g = vec![0.5; 192];
        assert_eq!(ch.backward_smooth(&ta, &g), prep.backward_smooth(&tb, &g));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn seeded_replay_and_unit_rescale(img_seed in 0u64..1000, noise in 0u64..1000) {
            let img = test_image(img_seed);
            let spec = ChannelSpec::parse("gaussian:0.02,quantize:64", noise).unwrap();
            proptest::prop_assert_eq!(spec.apply(&img), spec.apply(&img));
            let unit = ChannelSpec::parse("rescale:1.0", noise).unwrap();
            proptest::prop_assert_eq!(unit.apply(&img), img);
        }
    }
}
