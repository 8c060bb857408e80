//! The three fixed-resolution branch views.
//!
//! * aesthetic: the whole image downsampled so its short side equals
//!   `min_side_resize`, then a `view_size` square crop (random when training,
//!   centered when evaluating);
//! * fragment: the image is split into a `grid_n x grid_n` grid and one
//!   `mini_patch` square is cut from every cell at native resolution, then the
//!   patches are spliced together in grid order;
//! * salient: a `salient_size` square from the image center.
//!
//! The fragment and salient views read the original image; only the
//! aesthetic view is resampled. Output shapes never depend on the source
//! resolution.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::imaging::{crop, resize_bilinear, Image, Rect};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PreprocessConfig {
    /// Target length of the short side before the aesthetic crop.
    pub min_side_resize: usize,
    /// Side of every branch input.
    pub view_size: usize,
    pub grid_n: usize,
    pub mini_patch: usize,
    pub salient_size: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            min_side_resize: 512,
            view_size: 480,
            grid_n: 15,
            mini_patch: 32,
            salient_size: 480,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.view_size == 0 || self.grid_n == 0 || self.mini_patch == 0 {
            return Err(Error::InvalidConfig("view_size, grid_n and mini_patch must be positive".into()));
        }
        if self.grid_n * self.mini_patch != self.view_size {
            return Err(Error::InvalidConfig(format!(
                "grid_n * mini_patch = {} must equal view_size = {}",
                self.grid_n * self.mini_patch,
                self.view_size
            )));
        }
        if self.view_size > self.min_side_resize {
            return Err(Error::InvalidConfig(format!(
                "view_size {} exceeds min_side_resize {}",
                self.view_size, self.min_side_resize
            )));
        }
        if self.salient_size != self.view_size {
            return Err(Error::InvalidConfig(format!(
                "salient_size {} must equal view_size {} so all branch inputs share a shape",
                self.salient_size, self.view_size
            )));
        }
        Ok(())
    }

    /// Checks every per-image precondition of the three views.
    pub fn check_source(&self, height: usize, width: usize) -> Result<()> {
        self.validate()?;
        let (rh, rw) = self.aesthetic_size(height, width);
        if rh < self.view_size || rw < self.view_size {
            return Err(too_small(height, width, format!("resized to {rh}x{rw}, below the {} crop", self.view_size)));
        }
        if height < self.salient_size || width < self.salient_size {
            return Err(too_small(height, width, format!("salient crop needs {}", self.salient_size)));
        }
        for (i, rect) in grid_split(height, width, self.grid_n)?.iter().enumerate() {
            if rect.height < self.mini_patch || rect.width < self.mini_patch {
                return Err(Error::CellTooSmall {
                    row: i / self.grid_n,
                    col: i % self.grid_n,
                    height: rect.height,
                    width: rect.width,
                    patch: self.mini_patch,
                });
            }
        }
        Ok(())
    }

    /// Aspect-preserving size whose short side is `min_side_resize`; the long
    /// side is rounded to the nearest integer.
    pub fn aesthetic_size(&self, height: usize, width: usize) -> (usize, usize) {
        let m = self.min_side_resize;
        if height <= width {
            let w = libm::round(width as f64 * m as f64 / height as f64) as usize;
            (m, w.max(m))
        } else {
            let h = libm::round(height as f64 * m as f64 / width as f64) as usize;
            (h.max(m), m)
        }
    }
}

fn too_small(height: usize, width: usize, reason: alloc::string::String) -> Error {
    Error::ImageTooSmall { height, width, reason }
}

/// Training draws random crop positions from `seed`; evaluation uses centered
/// positions and consumes no randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Train { seed: u64 },
    Eval,
}

const AESTHETIC_STREAM: u64 = 1;
const FRAGMENT_STREAM: u64 = 2;

/// The triplet of branch inputs, each `view_size x view_size x 3` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchInputs {
    pub aesthetic: Image,
    pub fragment: Image,
    pub salient: Image,
}

impl BranchInputs {
    pub fn view(&self, branch: crate::Branch) -> &Image {
        match branch {
            crate::Branch::Aesthetic => &self.aesthetic,
            crate::Branch::Distortion => &self.fragment,
            crate::Branch::Salient => &self.salient,
        }
    }
}

fn offset(mode: SampleMode, rng: &mut Option<rand_chacha::ChaCha8Rng>, slack: usize) -> usize {
    match (mode, rng) {
        (SampleMode::Train { .. }, Some(rng)) => rng.random_range(0..=slack),
        _ => slack / 2,
    }
}

fn stream(mode: SampleMode, id: u64) -> Option<rand_chacha::ChaCha8Rng> {
    match mode {
        SampleMode::Train { seed: s } => Some(seed::rng(seed::derive(s, &[id]))),
        SampleMode::Eval => None,
    }
}

pub fn aesthetic_view(img: &Image, cfg: &PreprocessConfig, mode: SampleMode) -> Result<Image> {
    let (h, w) = img.dims();
    let (rh, rw) = cfg.aesthetic_size(h, w);
    let v = cfg.view_size;
    if rh < v || rw < v {
        return Err(too_small(h, w, format!("resized to {rh}x{rw}, below the {v} crop")));
    }
    let resized = resize_bilinear(img, rh, rw)?;
    let mut rng = stream(mode, AESTHETIC_STREAM);
    let top = offset(mode, &mut rng, rh - v);
    let left = offset(mode, &mut rng, rw - v);
    crop(&resized, Rect::new(top, left, v, v))
}

/// Uniform `grid_n x grid_n` partition in row-major order. Cell `(i, j)`
/// covers rows `[i*H/n, (i+1)*H/n)` and columns `[j*W/n, (j+1)*W/n)` with
/// floor division, so the cells tile the image exactly.
pub fn grid_split(height: usize, width: usize, grid_n: usize) -> Result<Vec<Rect>> {
    if grid_n == 0 || grid_n > height || grid_n > width {
        return Err(Error::InvalidGrid(format!("grid {grid_n} over a {height}x{width} image")));
    }
    let bound = |i: usize, len: usize| i * len / grid_n;
    let mut rects = Vec::with_capacity(grid_n * grid_n);
    for i in 0..grid_n {
        let (r0, r1) = (bound(i, height), bound(i + 1, height));
        for j in 0..grid_n {
            let (c0, c1) = (bound(j, width), bound(j + 1, width));
            rects.push(Rect::new(r0, c0, r1 - r0, c1 - c0));
        }
    }
    Ok(rects)
}

/// A fragment image together with the source window of every block.
#[derive(Debug, Clone)]
pub struct Fragment {
    pub image: Image,
    /// Source top-left corner of block `(i, j)` at index `i * grid_n + j`.
    pub origins: Vec<(usize, usize)>,
}

pub fn fragment_with_origins(img: &Image, cfg: &PreprocessConfig, mode: SampleMode) -> Result<Fragment> {
    let (h, w) = img.dims();
    let n = cfg.grid_n;
    let p = cfg.mini_patch;
    let cells = grid_split(h, w, n)?;
    if let Some((i, c)) = cells.iter().enumerate().find(|(_, c)| c.height < p || c.width < p) {
        return Err(Error::CellTooSmall {
            row: i / n,
            col: i % n,
            height: c.height,
            width: c.width,
            patch: p,
        });
    }
    let side = n * p;
    let mut out = vec![0.0f32; side * side * 3];
    let mut origins = Vec::with_capacity(cells.len());
    let mut rng = stream(mode, FRAGMENT_STREAM);
    for (idx, cell) in cells.iter().enumerate() {
        let (i, j) = (idx / n, idx % n);
        let top = cell.top + offset(mode, &mut rng, cell.height - p);
        let left = cell.left + offset(mode, &mut rng, cell.width - p);
        origins.push((top, left));
        for r in 0..p {
            let src = &img.row(top + r)[left * 3..(left + p) * 3];
            let dst_row = i * p + r;
            let start = (dst_row * side + j * p) * 3;
            out[start..start + p * 3].copy_from_slice(src);
        }
    }
    Ok(Fragment {
        image: Image::new(side, side, out)?,
        origins,
    })
}

pub fn fragment_view(img: &Image, cfg: &PreprocessConfig, mode: SampleMode) -> Result<Image> {
    fragment_with_origins(img, cfg, mode).map(|f| f.image)
}

/// Center crop at `floor((H - s) / 2), floor((W - s) / 2)`.
pub fn salient_view(img: &Image, cfg: &PreprocessConfig) -> Result<Image> {
    let (h, w) = img.dims();
    let s = cfg.salient_size;
    if h < s || w < s {
        return Err(too_small(h, w, format!("salient crop needs {s}")));
    }
    crop(img, Rect::new((h - s) / 2, (w - s) / 2, s, s))
}

pub fn preprocess_triplet(img: &Image, cfg: &PreprocessConfig, mode: SampleMode) -> Result<BranchInputs> {
    cfg.validate()?;
    Ok(BranchInputs {
        aesthetic: aesthetic_view(img, cfg, mode)?,
        fragment: fragment_view(img, cfg, mode)?,
        salient: salient_view(img, cfg)?,
    })
}
