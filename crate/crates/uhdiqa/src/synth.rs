//! Synthetic datasets on disk and in memory.

use std::path::Path;

use uhdiqa_core::data::{synth_sample, LabeledSample, SynthSpec};
use uhdiqa_core::train::QuantizedSource;

use crate::dataset::write_labels;
use crate::decode::save_png;
use crate::{IoError, Result};

pub const IMAGE_DIR: &str = "images";

pub fn image_name(index: usize) -> String {
    format!("img_{index:04}.png")
}

/// Writes `count` PNGs into `dir/images` and `dir/labels.csv` with paths
/// relative to `dir`.
pub fn write_dataset(dir: &Path, count: usize, spec: &SynthSpec) -> Result<Vec<LabeledSample>> {
    let images = dir.join(IMAGE_DIR);
    std::fs::create_dir_all(&images).map_err(|e| IoError::io(&images, e))?;
    let mut rows = Vec::with_capacity(count);
    for i in 0..count {
        let (img, mos, _) = synth_sample(spec, i)?;
        let name = image_name(i);
        save_png(&images.join(&name), &img)?;
        rows.push(LabeledSample { image_path: format!("{IMAGE_DIR}/{name}"), mos });
    }
    write_labels(&dir.join("labels.csv"), &rows)?;
    Ok(rows)
}

/// The same dataset held in memory at 8-bit precision, so it decodes to
/// exactly what [`write_dataset`] would put on disk.
pub fn memory_dataset(count: usize, spec: &SynthSpec) -> Result<QuantizedSource> {
    let mut src = QuantizedSource::default();
    for i in 0..count {
        let (img, mos, _) = synth_sample(spec, i)?;
        src.push(&img, mos);
    }
    Ok(src)
}
