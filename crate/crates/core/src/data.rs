//! Dataset-side logic: labelled samples, train/validation splitting,
//! in-batch pair sampling, and synthetic distortions with a known quality
//! ordering.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::imaging::Image;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabeledSample {
    pub image_path: String,
    pub mos: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.8, seed: 0 }
    }
}

/// Seeded shuffle, then the first `floor(n * train_fraction)` items train.
pub fn split<T: Clone>(samples: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "train_fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    if samples.len() < 2 {
        return Err(Error::DegenerateBatch(samples.len()));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut seed::rng(seed::derive(spec.seed, &[0x5917])));
    let cut = libm::floor(samples.len() as f64 * spec.train_fraction) as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..cut]), pick(&order[cut..])))
}

/// Random perfect pairing of `batch`: shuffle, then take adjacent items. An
/// odd leftover is not paired.
pub fn sample_pairs(batch: &[usize], pair_seed: u64) -> Result<Vec<(usize, usize)>> {
    if batch.len() < 2 {
        return Err(Error::DegenerateBatch(batch.len()));
    }
    let mut order = batch.to_vec();
    order.shuffle(&mut seed::rng(pair_seed));
    Ok(order.chunks_exact(2).map(|c| (c[0], c[1])).collect())
}

/// Every unordered pair `(i, j)`, `i < j` by position.
pub fn all_pairs(batch: &[usize]) -> Result<Vec<(usize, usize)>> {
    if batch.len() < 2 {
        return Err(Error::DegenerateBatch(batch.len()));
    }
    let mut out = Vec::with_capacity(batch.len() * (batch.len() - 1) / 2);
    for (i, &a) in batch.iter().enumerate() {
        for &b in &batch[i + 1..] {
            out.push((a, b));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DistortionKind {
    GaussianBlur,
    GaussianNoise,
    JpegLike,
}

impl DistortionKind {
    pub fn name(self) -> &'static str {
        match self {
            DistortionKind::GaussianBlur => "blur",
            DistortionKind::GaussianNoise => "noise",
            DistortionKind::JpegLike => "jpeg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "blur" => Some(DistortionKind::GaussianBlur),
            "noise" => Some(DistortionKind::GaussianNoise),
            "jpeg" => Some(DistortionKind::JpegLike),
            _ => None,
        }
    }
}

/// A degradation and its strength in `[0, 1]`.
///
/// Severity maps linearly to blur sigma `0..=8` px, noise standard deviation
/// `0..=0.25`, or JPEG-style quality factor `100..=10`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DistortionRecipe {
    pub kind: DistortionKind,
    pub severity: f64,
}

impl DistortionRecipe {
    pub fn blur_sigma(&self) -> f64 {
        8.0 * self.severity
    }

    pub fn noise_std(&self) -> f64 {
        0.25 * self.severity
    }

    pub fn quality_factor(&self) -> f64 {
        100.0 - 90.0 * self.severity
    }
}

/// Applies `recipe` and returns the degraded image with its pseudo-MOS
/// `1 − severity`. Severity 0 returns the input unchanged.
pub fn synth_distort(img: &Image, recipe: &DistortionRecipe, noise_seed: u64) -> Result<(Image, f64)> {
    if !(0.0..=1.0).contains(&recipe.severity) {
        return Err(Error::Domain(alloc::format!("severity {} outside [0, 1]", recipe.severity)));
    }
    let mos = 1.0 - recipe.severity;
    if recipe.severity == 0.0 {
        return Ok((img.clone(), mos));
    }
    let out = match recipe.kind {
        DistortionKind::GaussianBlur => gaussian_blur(img, recipe.blur_sigma())?,
        DistortionKind::GaussianNoise => add_noise(img, recipe.noise_std(), noise_seed)?,
        DistortionKind::JpegLike => jpeg_like(img, recipe.quality_factor())?,
    };
    Ok((out, mos))
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = libm::ceil(3.0 * sigma) as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| (w / total) as f32).collect()
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    if !(sigma > 0.0) {
        return Ok(img.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let (h, w) = img.dims();
    let src = img.data();
    let mut tmp = vec![0.0f32; src.len()];
    for y in 0..h {
        let row = &src[y * w * 3..(y + 1) * w * 3];
        let out = &mut tmp[y * w * 3..(y + 1) * w * 3];
        for x in 0..w {
            let mut acc = [0.0f32; 3];
            for (k, &kw) in kernel.iter().enumerate() {
                let sx = (x as isize + k as isize - r).clamp(0, w as isize - 1) as usize;
                for c in 0..3 {
                    acc[c] += kw * row[sx * 3 + c];
                }
            }
            out[x * 3..x * 3 + 3].copy_from_slice(&acc);
        }
    }
    let mut dst = vec![0.0f32; src.len()];
    let stride = w * 3;
    for (k, &kw) in kernel.iter().enumerate() {
        for y in 0..h {
            let sy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
            let from = &tmp[sy * stride..(sy + 1) * stride];
            let to = &mut dst[y * stride..(y + 1) * stride];
            for (d, &s) in to.iter_mut().zip(from) {
                *d += kw * s;
            }
        }
    }
    for v in dst.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Image::new(h, w, dst)
}

/// Additive white Gaussian noise, clipped to `[0, 1]`.
pub fn add_noise(img: &Image, std: f64, noise_seed: u64) -> Result<Image> {
    let normal = Normal::new(0.0f64, std).map_err(|_| Error::Domain(alloc::format!("noise std {std}")))?;
    let mut rng = seed::rng(noise_seed);
    let data = img
        .data()
        .iter()
        .map(|&v| (v as f64 + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32)
        .collect();
    Image::new(img.height(), img.width(), data)
}

const LUMA_Q: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, 12, 12, 14, 19, 26, 58, 60, 55, 14, 13, 16, 24, 40, 57, 69, 56, 14, 17, 22, 29, 51,
    87, 80, 62, 18, 22, 37, 56, 68, 109, 103, 77, 24, 35, 55, 64, 81, 104, 113, 92, 49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
];

const CHROMA_Q: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99,
];

/// Standard table scaled by the IJG quality rule.
fn scaled_table(base: &[u16; 64], quality: f64) -> [f64; 64] {
    let q = quality.clamp(1.0, 100.0);
    let scale = if q < 50.0 { 5000.0 / q } else { 200.0 - 2.0 * q };
    core::array::from_fn(|i| libm::floor((base[i] as f64 * scale + 50.0) / 100.0).clamp(1.0, 255.0))
}

fn dct_basis() -> [[f64; 8]; 8] {
    core::array::from_fn(|u| {
        core::array::from_fn(|x| {
            let c = if u == 0 { libm::sqrt(0.125) } else { 0.5 };
            c * libm::cos((2 * x + 1) as f64 * u as f64 * core::f64::consts::PI / 16.0)
        })
    })
}

/// Blockwise 8x8 DCT quantization in YCbCr, the lossy core of baseline JPEG
/// (no chroma subsampling, no entropy coding).
pub fn jpeg_like(img: &Image, quality: f64) -> Result<Image> {
    let (h, w) = img.dims();
    let basis = dct_basis();
    let tables = [scaled_table(&LUMA_Q, quality), scaled_table(&CHROMA_Q, quality), scaled_table(&CHROMA_Q, quality)];
    let mut planes = [vec![0.0f64; h * w], vec![0.0f64; h * w], vec![0.0f64; h * w]];
    for (i, px) in img.data().chunks_exact(3).enumerate() {
        let (r, g, b) = (px[0] as f64 * 255.0, px[1] as f64 * 255.0, px[2] as f64 * 255.0);
        planes[0][i] = 0.299 * r + 0.587 * g + 0.114 * b - 128.0;
        planes[1][i] = -0.168_736 * r - 0.331_264 * g + 0.5 * b;
        planes[2][i] = 0.5 * r - 0.418_688 * g - 0.081_312 * b;
    }
    for (plane, table) in planes.iter_mut().zip(&tables) {
        for by in (0..h).step_by(8) {
            for bx in (0..w).step_by(8) {
                let mut block = [[0.0f64; 8]; 8];
                for (y, row) in block.iter_mut().enumerate() {
                    for (x, v) in row.iter_mut().enumerate() {
                        *v = plane[(by + y).min(h - 1) * w + (bx + x).min(w - 1)];
                    }
                }
                let mut coef = [[0.0f64; 8]; 8];
                for u in 0..8 {
                    for v in 0..8 {
                        let mut acc = 0.0;
                        for y in 0..8 {
                            for x in 0..8 {
                                acc += basis[u][y] * basis[v][x] * block[y][x];
                            }
                        }
                        let q = table[u * 8 + v];
                        coef[u][v] = libm::round(acc / q) * q;
                    }
                }
                for y in 0..8.min(h - by) {
                    for x in 0..8.min(w - bx) {
                        let mut acc = 0.0;
                        for u in 0..8 {
                            for v in 0..8 {
                                acc += basis[u][y] * basis[v][x] * coef[u][v];
                            }
                        }
                        plane[(by + y) * w + bx + x] = acc;
                    }
                }
            }
        }
    }
    let mut data = Vec::with_capacity(h * w * 3);
    for i in 0..h * w {
        let (y, cb, cr) = (planes[0][i] + 128.0, planes[1][i], planes[2][i]);
        let rgb = [y + 1.402 * cr, y - 0.344_136 * cb - 0.714_136 * cr, y + 1.772 * cb];
        data.extend(rgb.iter().map(|v| (libm::round(v.clamp(0.0, 255.0)) / 255.0) as f32));
    }
    Image::new(h, w, data)
}

/// Sum of absolute differences between horizontally and vertically adjacent
/// values, over all channels.
pub fn total_variation(img: &Image) -> f64 {
    let (h, w) = img.dims();
    let d = img.data();
    let mut tv = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = d[(y * w + x) * 3 + c] as f64;
                if x + 1 < w {
                    tv += (d[(y * w + x + 1) * 3 + c] as f64 - v).abs();
                }
                if y + 1 < h {
                    tv += (d[((y + 1) * w + x) * 3 + c] as f64 - v).abs();
                }
            }
        }
    }
    tv
}

/// Procedural clean image: colour gradients, hard-edged discs and boxes, and
/// value-noise texture with octaves from 2 to 32 px. Detail at every scale
/// means blur keeps removing information as sigma grows. Statistics are
/// similar across seeds so that distortion strength, not content, dominates
/// apparent quality.
pub fn synth_clean_image(height: usize, width: usize, image_seed: u64) -> Result<Image> {
    const CELLS: [usize; 5] = [2, 4, 8, 16, 32];
    let mut rng = seed::rng(image_seed);
    let base: [f32; 3] = core::array::from_fn(|_| rng.random_range(0.4..0.6));
    let grad: [[f32; 2]; 3] = core::array::from_fn(|_| [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)]);
    let scale = height.max(width) as f32;
    // (centre y, centre x, half size, is_disc, colour offset), sizes in pixels
    let shapes: Vec<(f32, f32, f32, bool, [f32; 3])> = (0..6)
        .map(|_| {
            (
                rng.random_range(0.0..1.0) * scale,
                rng.random_range(0.0..1.0) * scale,
                rng.random_range(0.02..0.2) * scale,
                rng.random_bool(0.5),
                core::array::from_fn(|_| rng.random_range(-0.1..0.1)),
            )
        })
        .collect();
    let octaves: Vec<(usize, usize, Vec<f32>)> = CELLS
        .iter()
        .map(|&cell| {
            let (lh, lw) = (height / cell + 2, width / cell + 2);
            (cell, lw, (0..lh * lw).map(|_| rng.random_range(-1.0..1.0)).collect())
        })
        .collect();
    let amp = 0.08f32;
    Image::from_fn(height, width, |y, x| {
        let (fy, fx) = (y as f32 / scale, x as f32 / scale);
        let mut tex = 0.0f32;
        for (cell, lw, v) in &octaves {
            let (cy, cx) = (y / cell, x / cell);
            let (ty, tx) = ((y % cell) as f32 / *cell as f32, (x % cell) as f32 / *cell as f32);
            let at = |r: usize, c: usize| v[r * lw + c];
            let top = at(cy, cx) + (at(cy, cx + 1) - at(cy, cx)) * tx;
            let bot = at(cy + 1, cx) + (at(cy + 1, cx + 1) - at(cy + 1, cx)) * tx;
            tex += top + (bot - top) * ty;
        }
        core::array::from_fn(|c| {
            let mut v = base[c] + grad[c][0] * fy + grad[c][1] * fx;
            for &(sy, sx, r, disc, col) in &shapes {
                let (dy, dx) = ((y as f32 - sy).abs(), (x as f32 - sx).abs());
                let d = if disc { libm::sqrtf(dy * dy + dx * dx) } else { dy.max(dx) };
                // one-pixel antialiased edge
                v += col[c] * (r - d + 0.5).clamp(0.0, 1.0);
            }
            (v + amp * tex).clamp(0.0, 1.0)
        })
    })
}

/// Recipe for a synthetic dataset whose only quality factor is distortion
/// strength.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthSpec {
    pub seed: u64,
    /// Side of the square clean images.
    pub size: usize,
    /// Item `i` uses `kinds[i % kinds.len()]`.
    pub kinds: Vec<DistortionKind>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            size: 1024,
            kinds: vec![DistortionKind::GaussianBlur, DistortionKind::GaussianNoise],
        }
    }
}

/// Item `index` of a synthetic dataset: degraded image, pseudo-MOS and the
/// recipe used. Severity is uniform on `[0, 1]`.
pub fn synth_sample(spec: &SynthSpec, index: usize) -> Result<(Image, f64, DistortionRecipe)> {
    if spec.kinds.is_empty() {
        return Err(Error::InvalidConfig("no distortion kinds".into()));
    }
    let i = index as u64;
    let severity: f64 = seed::rng(seed::derive(spec.seed, &[1, i])).random_range(0.0..=1.0);
    let recipe = DistortionRecipe { kind: spec.kinds[index % spec.kinds.len()], severity };
    let clean = synth_clean_image(spec.size, spec.size, seed::derive(spec.seed, &[2, i]))?;
    let (img, mos) = synth_distort(&clean, &recipe, seed::derive(spec.seed, &[3, i]))?;
    Ok((img, mos, recipe))
}
