//! RGB rasters and the geometric primitives every branch view is built from.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Row-major RGB raster with channel values normalized to `[0, 1]`.
#[derive(Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl core::fmt::Debug for Image {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Image")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish_non_exhaustive()
    }
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimension(format!("{height}x{width} image")));
        }
        if data.len() != height * width * Self::CHANNELS {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {height}x{width}x3 image",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Result<Self> {
        Self::from_fn(height, width, |_, _| rgb)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * Self::CHANNELS);
        for r in 0..height {
            for c in 0..width {
                data.extend_from_slice(&f(r, c));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * self.width + col) * Self::CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [f32; 3]) {
        let i = (row * self.width + col) * Self::CHANNELS;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// One row of interleaved RGB values.
    pub fn row(&self, row: usize) -> &[f32] {
        let stride = self.width * Self::CHANNELS;
        &self.data[row * stride..(row + 1) * stride]
    }

    pub fn full_rect(&self) -> Rect {
        Rect::new(0, 0, self.height, self.width)
    }
}

/// Axis-aligned pixel window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub const fn new(top: usize, left: usize, height: usize, width: usize) -> Self {
        Self { top, left, height, width }
    }

    pub fn bottom(&self) -> usize {
        self.top + self.height
    }

    pub fn right(&self) -> usize {
        self.left + self.width
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.height >= 1 && self.width >= 1 && self.bottom() <= height && self.right() <= width
    }
}

/// Exact copy of the window `r`; no resampling.
pub fn crop(img: &Image, r: Rect) -> Result<Image> {
    if !r.fits(img.height, img.width) {
        return Err(Error::OutOfBounds {
            rect: r,
            height: img.height,
            width: img.width,
        });
    }
    let mut data = Vec::with_capacity(r.height * r.width * Image::CHANNELS);
    for row in r.top..r.bottom() {
        let line = img.row(row);
        data.extend_from_slice(&line[r.left * Image::CHANNELS..r.right() * Image::CHANNELS]);
    }
    Image::new(r.height, r.width, data)
}

/// Source sample position and blend weight along one axis.
#[derive(Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(src: usize, dst: usize) -> Vec<Tap> {
    let scale = src as f64 / dst as f64;
    let last = (src - 1) as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let lo = libm::floor(pos) as usize;
            let hi = (lo + 1).min(src - 1);
            Tap { lo, hi, frac: pos - lo as f64 }
        })
        .collect()
}

/// Bilinear resampling with the half-pixel-center convention: output sample
/// `i` reads source coordinate `(i + 0.5) * src / dst - 0.5`, clamped to the
/// valid range. No antialiasing prefilter is applied when shrinking.
pub fn resize_bilinear(img: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidDimension(format!("resize target {out_h}x{out_w}")));
    }
    if (out_h, out_w) == img.dims() {
        return Ok(img.clone());
    }
    let ys = taps(img.height, out_h);
    let xs = taps(img.width, out_w);
    let mut data = vec![0.0f32; out_h * out_w * Image::CHANNELS];
    for (r, ty) in ys.iter().enumerate() {
        let top = img.row(ty.lo);
        let bot = img.row(ty.hi);
        let out = &mut data[r * out_w * 3..(r + 1) * out_w * 3];
        for (c, tx) in xs.iter().enumerate() {
            for ch in 0..3 {
                let a = top[tx.lo * 3 + ch];
                let b = top[tx.hi * 3 + ch];
                let d = bot[tx.lo * 3 + ch];
                let e = bot[tx.hi * 3 + ch];
                let upper = a as f64 + (b as f64 - a as f64) * tx.frac;
                let lower = d as f64 + (e as f64 - d as f64) * tx.frac;
                let v = (upper + (lower - upper) * ty.frac) as f32;
                let lo = a.min(b).min(d).min(e);
                let hi = a.max(b).max(d).max(e);
                out[c * 3 + ch] = v.clamp(lo, hi);
            }
        }
    }
    Image::new(out_h, out_w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_image(h: usize, w: usize, seed: u64) -> Image {
        use rand::Rng;
        let mut rng = crate::seed::rng(seed);
        Image::from_fn(h, w, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap()
    }

    /// Direct evaluation of the sampling convention, one output value at a time.
    fn scalar_bilinear(img: &Image, out_h: usize, out_w: usize) -> Vec<f64> {
        let (h, w) = img.dims();
        let mut out = Vec::new();
        for i in 0..out_h {
            for j in 0..out_w {
                let sy = ((i as f64 + 0.5) * h as f64 / out_h as f64 - 0.5).max(0.0).min((h - 1) as f64);
                let sx = ((j as f64 + 0.5) * w as f64 / out_w as f64 - 0.5).max(0.0).min((w - 1) as f64);
                let y0 = sy as usize;
                let x0 = sx as usize;
                let y1 = if y0 + 1 < h { y0 + 1 } else { y0 };
                let x1 = if x0 + 1 < w { x0 + 1 } else { x0 };
                let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
                for ch in 0..3 {
                    let p = |r: usize, c: usize| img.pixel(r, c)[ch] as f64;
                    out.push(
                        p(y0, x0) * (1.0 - fy) * (1.0 - fx)
                            + p(y0, x1) * (1.0 - fy) * fx
                            + p(y1, x0) * fy * (1.0 - fx)
                            + p(y1, x1) * fy * fx,
                    );
                }
            }
        }
        out
    }

    #[test]
    fn image_rejects_bad_buffers() {
        assert!(matches!(Image::new(0, 3, vec![]), Err(Error::InvalidDimension(_))));
        assert!(matches!(Image::new(2, 2, vec![0.0; 11]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = Image::filled(100, 100, [0.2, 0.5, 0.9]).unwrap();
        let out = resize_bilinear(&img, 50, 50).unwrap();
        assert_eq!(out.dims(), (50, 50));
        for px in out.data().chunks(3) {
            assert!((px[0] - 0.2).abs() < 1e-6 && (px[1] - 0.5).abs() < 1e-6 && (px[2] - 0.9).abs() < 1e-6);
        }
    }

    #[test]
    fn identity_resize() {
        let img = random_image(7, 9, 1);
        assert_eq!(resize_bilinear(&img, 7, 9).unwrap(), img);
    }

    #[test]
    fn checkerboard_matches_scalar_oracle() {
        let img = Image::from_fn(4, 4, |r, c| {
            let v = ((r + c) % 2) as f32;
            [v, 1.0 - v, v]
        })
        .unwrap();
        let out = resize_bilinear(&img, 2, 2).unwrap();
        let want = scalar_bilinear(&img, 2, 2);
        for (a, b) in out.data().iter().zip(&want) {
            assert!((*a as f64 - b).abs() < 1e-7);
        }
        // every output lands exactly between two black and two white pixels
        for v in out.data() {
            assert!((v - 0.5).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_target_rejected() {
        let img = random_image(3, 3, 2);
        assert!(matches!(resize_bilinear(&img, 0, 3), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn crop_edge_cases() {
        let img = random_image(8, 8, 3);
        assert_eq!(crop(&img, img.full_rect()).unwrap(), img);
        let one = crop(&img, Rect::new(0, 0, 1, 1)).unwrap();
        assert_eq!(one.pixel(0, 0), img.pixel(0, 0));
        let win = crop(&img, Rect::new(2, 3, 4, 4)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(win.pixel(i, j), img.pixel(2 + i, 3 + j));
            }
        }
        assert!(matches!(crop(&img, Rect::new(5, 5, 4, 3)), Err(Error::OutOfBounds { .. })));
        assert!(matches!(crop(&img, Rect::new(0, 0, 0, 3)), Err(Error::OutOfBounds { .. })));
    }

    proptest! {
        #[test]
        fn crop_is_exact(h in 1usize..20, w in 1usize..20, seed in any::<u64>(), a in any::<u32>(), b in any::<u32>()) {
            let img = random_image(h, w, seed);
            let top = a as usize % h;
            let left = b as usize % w;
            let rh = 1 + (a as usize / 7) % (h - top);
            let rw = 1 + (b as usize / 7) % (w - left);
            let out = crop(&img, Rect::new(top, left, rh, rw)).unwrap();
            for i in 0..rh {
                for j in 0..rw {
                    prop_assert_eq!(out.pixel(i, j), img.pixel(top + i, left + j));
                }
            }
        }

        #[test]
        fn resize_stays_within_source_range(h in 1usize..24, w in 1usize..24, oh in 1usize..30, ow in 1usize..30, seed in any::<u64>()) {
            let img = random_image(h, w, seed);
            let lo = img.data().iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = img.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let out = resize_bilinear(&img, oh, ow).unwrap();
            prop_assert_eq!(out.dims(), (oh, ow));
            let want = scalar_bilinear(&img, oh, ow);
            for (v, o) in out.data().iter().zip(&want) {
                prop_assert!(*v >= lo && *v <= hi);
                prop_assert!((*v as f64 - o).abs() < 1e-6);
            }
        }
    }
}
