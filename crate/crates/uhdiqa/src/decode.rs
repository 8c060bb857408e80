//! Image files to and from `[0, 1]` RGB.

use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};
use uhdiqa_core::train::quantize;
use uhdiqa_core::Image;

use crate::{IoError, Result};

/// Decodes a PNG or JPEG file. Grey and alpha channels are converted to RGB;
/// 16-bit data is reduced to 8 bits.
pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| IoError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(from_rgb8(&decoded.to_rgb8())?)
}

pub fn from_rgb8(img: &RgbImage) -> uhdiqa_core::Result<Image> {
    let data = img.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
    Image::new(img.height() as usize, img.width() as usize, data)
}

pub fn to_rgb8(img: &Image) -> RgbImage {
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    ImageBuffer::<Rgb<u8>, _>::from_raw(img.width() as u32, img.height() as u32, bytes).expect("buffer matches dimensions")
}

/// Writes an 8-bit RGB PNG.
pub fn save_png(path: &Path, img: &Image) -> Result<()> {
    to_rgb8(img)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => IoError::io(path, io),
            other => IoError::format(path, other.to_string()),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact_on_8bit_levels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = Image::from_fn(5, 7, |r, c| [r as f32 / 4.0, c as f32 / 6.0, 128.0 / 255.0]).unwrap();
        save_png(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.dims(), (5, 7));
        let requant = from_rgb8(&to_rgb8(&img)).unwrap();
        assert_eq!(back, requant);
    }

    #[test]
    fn missing_and_garbage_files_fail() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_image(&dir.path().join("none.png")), Err(IoError::Io { .. })));
        let junk = dir.path().join("junk.png");
        std::fs::write(&junk, b"not an image").unwrap();
        assert!(matches!(load_image(&junk), Err(IoError::Decode { .. })));
    }
}
