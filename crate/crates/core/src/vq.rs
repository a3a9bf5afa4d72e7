//! Toy VQ tokenizer: codebook, per-cell affine-plus-tanh decoder, its exact
//! pseudo-inverse encoder, and nearest-neighbour quantizer.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::model::TokenId;

/// Clamp guard applied before `atanh`.
pub const ATANH_EPS: f64 = 1e-6;
/// Largest pre-activation magnitude the decoder produces for a codebook vector.
/// `tanh(6.5)` stays well inside `1 - ATANH_EPS`, so clean images invert exactly.
const MAX_PREACTIVATION: f64 = 6.5;

#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    size: usize,
    dim: usize,
    vectors: Vec<f64>,
    min_distance: f64,
}

impl Codebook {
    /// Seeded Gaussian rows, each rescaled to unit RMS.
    pub fn build(seed: u64, size: usize, dim: usize) -> Result<Self> {
        if size < 2 || dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "codebook needs N >= 2 and d >= 1 (got {size}, {dim})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vectors = Vec::with_capacity(size * dim);
        for _ in 0..size {
            let row: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let rms = (row.iter().map(|v| v * v).sum::<f64>() / dim as f64).sqrt();
            vectors.extend(row.iter().map(|v| v / rms));
        }
        Self::from_vectors(size, dim, vectors)
    }

    pub fn from_vectors(size: usize, dim: usize, vectors: Vec<f64>) -> Result<Self> {
        if vectors.len() != size * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {size}x{dim} codebook",
                vectors.len()
            )));
        }
        let mut book = Self {
            size,
            dim,
            vectors,
            min_distance: f64::INFINITY,
        };
        let mut min = f64::INFINITY;
        for i in 0..size {
            for j in i + 1..size {
                min = min.min(sq_dist(book.vector(i), book.vector(j)));
            }
        }
        book.min_distance = min.sqrt();
        if book.min_distance < 1e-6 {
            return Err(Error::DegenerateCodebook(book.min_distance));
        }
        Ok(book)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn min_distance(&self) -> f64 {
        self.min_distance
    }

    pub fn vector(&self, index: usize) -> &[f64] {
        &self.vectors[index * self.dim..(index + 1) * self.dim]
    }

    /// Index of the nearest row; ties go to the lowest index.
    pub fn nearest(&self, v: &[f64]) -> TokenId {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for i in 0..self.size {
            let d = sq_dist(self.vector(i), v);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best as TokenId
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `h × w` grid of codebook indices, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenGrid {
    pub height: usize,
    pub width: usize,
    pub indices: Vec<TokenId>,
}

impl TokenGrid {
    pub fn new(height: usize, width: usize, indices: Vec<TokenId>) -> Result<Self> {
        if indices.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} tokens for a {height}x{width} grid",
                indices.len()
            )));
        }
        Ok(Self {
            height,
            width,
            indices,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Number of cells that differ from `other`.
    pub fn disagreement(&self, other: &TokenGrid) -> usize {
        self.indices
            .iter()
            .zip(&other.indices)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Percentage of cells equal to `truth`.
    pub fn recovery_rate(&self, truth: &TokenGrid) -> f64 {
        if truth.is_empty() {
            return 100.0;
        }
        100.0 * (truth.len() - self.disagreement(truth)) as f64 / truth.len() as f64
    }
}

/// `h × w × d` continuous latents, row-major by cell.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGrid {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl LatentGrid {
    pub fn zeros(height: usize, width: usize, dim: usize) -> Self {
        Self {
            height,
            width,
            dim,
            data: vec![0.0; height * width * dim],
        }
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cell_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Latents equal to the codebook vectors of `grid`.
    pub fn from_tokens(grid: &TokenGrid, book: &Codebook) -> Result<Self> {
        let mut out = Self::zeros(grid.height, grid.width, book.dim());
        for (i, &t) in grid.indices.iter().enumerate() {
            if t as usize >= book.size() {
                return Err(Error::IndexOutOfRange {
                    index: t,
                    size: book.size(),
                });
            }
            out.cell_mut(i).copy_from_slice(book.vector(t as usize));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSpec {
    pub codebook_seed: u64,
    pub codebook_size: usize,
    pub dim: usize,
    pub decoder_seed: u64,
    /// Downsample ratio `p`.
    pub patch: usize,
    pub channels: usize,
    pub grid_height: usize,
    pub grid_width: usize,
    /// Requested tanh gain; lowered if needed to keep clean outputs invertible.
    pub gain: f64,
    pub bias_scale: f64,
}

impl Default for TokenizerSpec {
    fn default() -> Self {
        Self {
            codebook_seed: 0xc0de,
            codebook_size: 4096,
            dim: 8,
            decoder_seed: 0xdec0,
            patch: 4,
            channels: 3,
            grid_height: 24,
            grid_width: 24,
            gain: 1.0,
            bias_scale: 0.1,
        }
    }
}

impl TokenizerSpec {
    pub fn image_height(&self) -> usize {
        self.grid_height * self.patch
    }

    pub fn image_width(&self) -> usize {
        self.grid_width * self.patch
    }

    pub fn tokens(&self) -> usize {
        self.grid_height * self.grid_width
    }
}

/// Codebook plus decoder `G` and encoder `E`.
#[derive(Clone, Debug)]
pub struct Tokenizer {
    spec: TokenizerSpec,
    book: Codebook,
    /// `(p²·C) × d`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
    /// Left pseudo-inverse of `weights`, `d × (p²·C)`, row-major.
    pinv: Vec<f64>,
    alpha: f64,
    weight_norm: f64,
    /// Output pixel of row `r` of cell `i`, at `i · rows + r`.
    pixels: Vec<usize>,
}

impl Tokenizer {
    pub fn new(spec: TokenizerSpec) -> Result<Self> {
        if spec.patch == 0 || spec.channels == 0 || spec.grid_height == 0 || spec.grid_width == 0
        {
            return Err(Error::InvalidConfig("tokenizer dimensions must be positive".into()));
        }
        if !(spec.gain > 0.0 && spec.gain.is_finite()) {
            return Err(Error::InvalidConfig("decoder gain must be positive".into()));
        }
        let book = Codebook::build(spec.codebook_seed, spec.codebook_size, spec.dim)?;
        let rows = spec.patch * spec.patch * spec.channels;
        if rows < spec.dim {
            return Err(Error::InvalidConfig(format!(
                "patch of {rows} values cannot determine {} latent dims",
                spec.dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.decoder_seed);
        let scale = 1.0 / (spec.dim as f64).sqrt();
        let weights: Vec<f64> = (0..rows * spec.dim)
            .map(|_| scale * <StandardNormal as rand_distr::Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let bias: Vec<f64> = (0..rows)
            .map(|_| spec.bias_scale * <StandardNormal as rand_distr::Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();

        let w = DMatrix::from_row_slice(rows, spec.dim, &weights);
        let gram = w.transpose() * &w;
        let gram_inv = gram
            .try_inverse()
            .ok_or_else(|| Error::InvalidConfig("decoder weights are rank deficient".into()))?;
        let pinv_m = gram_inv * w.transpose();
        let mut pinv = Vec::with_capacity(spec.dim * rows);
        for r in 0..spec.dim {
            for c in 0..rows {
                pinv.push(pinv_m[(r, c)]);
            }
        }
        let weight_norm = w.singular_values().max();

        let mut max_pre = 0.0f64;
        for t in 0..book.size() {
            let z = book.vector(t);
            for r in 0..rows {
                let u = bias[r] + dot(&weights[r * spec.dim..(r + 1) * spec.dim], z);
                max_pre = max_pre.max(u.abs());
            }
        }
        let alpha = spec.gain.min(MAX_PREACTIVATION / max_pre.max(f64::MIN_POSITIVE));

        let (p, c) = (spec.patch, spec.channels);
        let image_width = spec.image_width();
        let mut pixels = Vec::with_capacity(spec.tokens() * rows);
        for cell in 0..spec.tokens() {
            let (gi, gj) = (cell / spec.grid_width, cell % spec.grid_width);
            for r in 0..rows {
                let (dy, dx, ch) = (r / (p * c), (r / c) % p, r % c);
                pixels.push(((gi * p + dy) * image_width + gj * p + dx) * c + ch);
            }
        }

        Ok(Self {
            spec,
            book,
            weights,
            bias,
            pinv,
            alpha,
            weight_norm,
            pixels,
        })
    }

    pub fn spec(&self) -> &TokenizerSpec {
        &self.spec
    }

    pub fn codebook(&self) -> &Codebook {
        &self.book
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Per-cell Lipschitz constant of the decoder, `‖W_G‖₂ · α`.
    pub fn lipschitz(&self) -> f64 {
        self.weight_norm * self.alpha
    }

    fn patch_rows(&self) -> usize {
        self.spec.patch * self.spec.patch * self.spec.channels
    }

    /// Pixel index of row `r` of cell `cell` in the output image.
    #[inline]
    fn pixel_index(&self, cell: usize, r: usize) -> usize {
        self.pixels[cell * self.patch_rows() + r]
    }

    fn check_grid(&self, height: usize, width: usize) -> Result<()> {
        if (height, width) != (self.spec.grid_height, self.spec.grid_width) {
            return Err(Error::ShapeMismatch(format!(
                "grid {height}x{width}, tokenizer expects {}x{}",
                self.spec.grid_height, self.spec.grid_width
            )));
        }
        Ok(())
    }

    fn check_image(&self, image: &ImageTensor) -> Result<()> {
        let want = (self.spec.image_height(), self.spec.image_width(), self.spec.channels);
        if image.shape() != want {
            return Err(Error::ShapeMismatch(format!(
                "image {:?}, tokenizer expects {want:?}",
                image.shape()
            )));
        }
        Ok(())
    }

    /// `G(z_q)`: decode a token grid.
    pub fn decode(&self, grid: &TokenGrid) -> Result<ImageTensor> {
        self.check_grid(grid.height, grid.width)?;
        self.decode_continuous(&LatentGrid::from_tokens(grid, &self.book)?)
    }

    /// Decoder applied to raw latents.
    pub fn decode_continuous(&self, latents: &LatentGrid) -> Result<ImageTensor> {
        self.check_grid(latents.height, latents.width)?;
        if latents.dim != self.spec.dim {
            return Err(Error::ShapeMismatch("latent dimension".into()));
        }
        let mut img = ImageTensor::zeros(
            self.spec.image_height(),
            self.spec.image_width(),
            self.spec.channels,
        );
        let d = self.spec.dim;
        let rows = self.patch_rows();
        for cell in 0..latents.cells() {
            let z = latents.cell(cell);
            for r in 0..rows {
                let u = self.bias[r] + dot(&self.weights[r * d..(r + 1) * d], z);
                let idx = self.pixel_index(cell, r);
                img.data_mut()[idx] = tanh(self.alpha * u);
            }
        }
        Ok(img)
    }

    /// Pulls a pixel-space gradient back to latents, given the decoder output `decoded`.
    pub fn decode_backward(&self, decoded: &ImageTensor, grad: &[f64]) -> LatentGrid {
        let d = self.spec.dim;
        let rows = self.patch_rows();
        let mut out = LatentGrid::zeros(self.spec.grid_height, self.spec.grid_width, d);
        let x = decoded.data();
        for cell in 0..out.cells() {
            let gz = out.cell_mut(cell);
            for r in 0..rows {
                let idx = self.pixel_index(cell, r);
                let gu = grad[idx] * self.alpha * (1.0 - x[idx] * x[idx]);
                if gu != 0.0 {
                    for (g, w) in gz.iter_mut().zip(&self.weights[r * d..(r + 1) * d]) {
                        *g += gu * w;
                    }
                }
            }
        }
        out
    }

    /// `E(x)`: per-cell `atanh` and pseudo-inverse.
    pub fn encode(&self, image: &ImageTensor) -> Result<LatentGrid> {
        self.check_image(image)?;
        let d = self.spec.dim;
        let rows = self.patch_rows();
        let mut out = LatentGrid::zeros(self.spec.grid_height, self.spec.grid_width, d);
        let mut u = vec![0.0; rows];
        for cell in 0..out.cells() {
            for (r, ur) in u.iter_mut().enumerate() {
                let v = image.data()[self.pixel_index(cell, r)].clamp(-1.0 + ATANH_EPS, 1.0 - ATANH_EPS);
                *ur = v.atanh() / self.alpha - self.bias[r];
            }
            for (k, z) in out.cell_mut(cell).iter_mut().enumerate() {
                *z = dot(&self.pinv[k * rows..(k + 1) * rows], &u);
            }
        }
        Ok(out)
    }

    /// `Q(ẑ)`: nearest codebook row per cell.
    pub fn quantize(&self, latents: &LatentGrid) -> Result<TokenGrid> {
        quantize(latents, &self.book)
    }

    /// Convenience: `Q(E(x))`.
    pub fn reencode(&self, image: &ImageTensor) -> Result<TokenGrid> {
        self.quantize(&self.encode(image)?)
    }
}

/// Nearest codebook row per cell, ties to the lowest index.
pub fn quantize(latents: &LatentGrid, book: &Codebook) -> Result<TokenGrid> {
    if latents.dim != book.dim() {
        return Err(Error::ShapeMismatch("latent dimension".into()));
    }
    let indices = (0..latents.cells())
        .map(|i| book.nearest(latents.cell(i)))
        .collect();
    TokenGrid::new(latents.height, latents.width, indices)
}

/// `tanh` through one `exp`, about three times cheaper than the libm routine.
#[inline]
fn tanh(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        x.tanh()
    } else {
        1.0 - 2.0 / ((2.0 * x).exp() + 1.0)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tok() -> Tokenizer {
        Tokenizer::new(TokenizerSpec::default()).unwrap()
    }

    fn random_grid(seed: u64, t: &Tokenizer) -> TokenGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = t.spec();
        let n = t.codebook().size() as u32;
        TokenGrid::new(
            s.grid_height,
            s.grid_width,
            (0..s.tokens()).map(|_| rng.random_range(0..n)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn codebook_is_deterministic_and_distinct() {
        let a = Codebook::build(3, 256, 8).unwrap();
        let b = Codebook::build(3, 256, 8).unwrap();
        assert_eq!(a, b);
        // Exhaustive pairwise check, independent of the recorded minimum.
        let mut min = f64::INFINITY;
        for i in 0..256 {
            for j in 0..i {
                let d: f64 = a
                    .vector(i)
                    .iter()
                    .zip(a.vector(j))
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt();
                min = min.min(d);
            }
        }
        assert!(min > 0.0);
        assert!((min - a.min_distance()).abs() < 1e-12);
        for i in 0..256 {
            let rms = (a.vector(i).iter().map(|v| v * v).sum::<f64>() / 8.0).sqrt();
            assert!((rms - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_codebook_detected() {
        // With d = 1 every unit-RMS row is +1 or -1; some seed gives two equal rows.
        let hit = (0..64).find_map(|seed| match Codebook::build(seed, 2, 1) {
            Err(Error::DegenerateCodebook(_)) => Some(seed),
            _ => None,
        });
        assert!(hit.is_some());
    }

    #[test]
    fn decode_shape_and_tiling() {
        let t = tok();
        let grid = TokenGrid::new(24, 24, vec![17; 576]).unwrap();
        let img = t.decode(&grid).unwrap();
        assert_eq!(img.shape(), (96, 96, 3));
        for y in 0..96 {
            for x in 0..96 {
                for c in 0..3 {
                    assert_eq!(img.get(y, x, c), img.get(y % 4, x % 4, c));
                }
            }
        }
        assert!(img.data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn zero_vector_zero_bias_gives_zero_image() {
        let spec = TokenizerSpec {
            bias_scale: 0.0,
            ..TokenizerSpec::default()
        };
        let t = Tokenizer::new(spec).unwrap();
        let img = t.decode_continuous(&LatentGrid::zeros(24, 24, 8)).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decode_rejects_bad_index() {
        let t = tok();
        let mut grid = random_grid(1, &t);
        grid.indices[3] = 4096;
        assert!(matches!(t.decode(&grid), Err(Error::IndexOutOfRange { index: 4096, .. })));
    }

    #[test]
    fn lossless_round_trip() {
        let t = tok();
        for seed in 0..10 {
            let grid = random_grid(seed, &t);
            let z = t.encode(&t.decode(&grid).unwrap()).unwrap();
            let truth = LatentGrid::from_tokens(&grid, t.codebook()).unwrap();
            let err = z
                .data
                .iter()
                .zip(&truth.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "max latent error {err}");
            assert_eq!(t.quantize(&z).unwrap(), grid);
        }
    }

    #[test]
    fn saturated_pixels_stay_finite() {
        let t = tok();
        let img = ImageTensor::filled(96, 96, 3, 1.0);
        let z = t.encode(&img).unwrap();
        assert!(z.data.iter().all(|v| v.is_finite()));
        let img = ImageTensor::filled(96, 96, 3, -1.0);
        assert!(t.encode(&img).unwrap().data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn encode_rejects_wrong_shape() {
        assert!(matches!(
            tok().encode(&ImageTensor::zeros(95, 96, 3)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn small_noise_quantizes_exactly_when_below_margin() {
        use rand_distr::Normal;
        let t = tok();
        let grid = random_grid(9, &t);
        let clean = t.decode(&grid).unwrap();
        let truth = LatentGrid::from_tokens(&grid, t.codebook()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let noisy: Vec<f64> = clean
            .data()
            .iter()
            .map(|v| (v + noise.sample(&mut rng)).clamp(-1.0, 1.0))
            .collect();
        let noisy = ImageTensor::from_vec(96, 96, 3, noisy).unwrap();
        let z = t.encode(&noisy).unwrap();
        let q = t.quantize(&z).unwrap();
        // Every cell whose latent error is below half the codebook's minimum spacing
        // must quantize back to the true token.
        let half = 0.5 * t.codebook().min_distance();
        let mut safe = 0;
        for cell in 0..576 {
            let e = sq_dist(z.cell(cell), truth.cell(cell)).sqrt();
            assert!(e.is_finite());
            if e < half {
                safe += 1;
                assert_eq!(q.indices[cell], grid.indices[cell]);
            }
        }
        assert!(safe > 0);
    }

    #[test]
    fn quantize_ties_and_exact_hits() {
        let book = Codebook::from_vectors(3, 2, vec![1.0, 0.0, -1.0, 0.0, 0.0, 3.0]).unwrap();
        let lat = LatentGrid {
            height: 1,
            width: 2,
            dim: 2,
            data: vec![0.0, 0.0, 0.0, 3.0],
        };
        assert_eq!(quantize(&lat, &book).unwrap().indices, vec![0, 2]);
        let t = tok();
        let mut z = LatentGrid::zeros(24, 24, 8);
        z.cell_mut(0).copy_from_slice(t.codebook().vector(7));
        assert_eq!(t.quantize(&z).unwrap().indices[0], 7);
    }

    #[test]
    fn quantize_matches_brute_force() {
        let t = tok();
        let book = t.codebook();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let v: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
            let got = book.nearest(&v) as usize;
            let mut best = (f64::INFINITY, 0);
            for i in 0..book.size() {
                let d: f64 = book.vector(i).iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum();
                if d < best.0 {
                    best = (d, i);
                }
            }
            assert_eq!(got, best.1);
        }
    }

    #[test]
    fn decoder_is_lipschitz_per_cell() {
        let t = tok();
        let lip = t.lipschitz();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = random_grid(6, &t);
        let base = LatentGrid::from_tokens(&grid, t.codebook()).unwrap();
        let x0 = t.decode_continuous(&base).unwrap();
        for _ in 0..20 {
            let mut z = base.clone();
            let cell = rng.random_range(0..576);
            let delta: Vec<f64> = (0..8).map(|_| 0.1 * <StandardNormal as rand_distr::Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect();
            for (v, d) in z.cell_mut(cell).iter_mut().zip(&delta) {
                *v += d;
            }
            let x1 = t.decode_continuous(&z).unwrap();
            let dz = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(x0.l2_distance(&x1) <= lip * dz * (1.0 + 1e-12));
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn any_grid_survives_decode_reencode(seed in proptest::prelude::any::<u64>()) {
            let t = tok();
            let grid = random_grid(seed, &t);
            proptest::prop_assert_eq!(t.encode(&t.decode(&grid).unwrap()).and_then(|z| t.quantize(&z)).unwrap(), grid);
        }
    }
}
