//! Label files and images on disk.
//!
//! A label file is a CSV with the header `filename,mos`. Relative image paths
//! are resolved against a root directory, by default the one holding the CSV.

use std::path::{Path, PathBuf};

use uhdiqa_core::data::LabeledSample;
use uhdiqa_core::train::SampleSource;
use uhdiqa_core::Image;

use crate::decode::load_image;
use crate::{IoError, Result};

pub const LABELS_HEADER: [&str; 2] = ["filename", "mos"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelOptions {
    /// Base for relative paths; `None` means the CSV's directory.
    pub root: Option<PathBuf>,
    /// Accept MOS values outside `[0, 1]`.
    pub allow_any_range: bool,
}

#[derive(serde::Deserialize)]
struct Row {
    filename: String,
    mos: f64,
}

/// Reads a label file. Paths in the result are resolved and every listed
/// image must exist. Rows are numbered from 1, header excluded.
pub fn read_labels(path: &Path, opts: &LabelOptions) -> Result<Vec<LabeledSample>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().map(str::trim).ne(LABELS_HEADER) {
        return Err(IoError::format(
            path,
            format!("expected header `filename,mos`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let base = opts.root.clone().unwrap_or_else(|| path.parent().unwrap_or(Path::new("")).to_path_buf());
    let mut out = Vec::new();
    let mut missing = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| IoError::format(path, format!("row {row_no}: {}", csv_kind(e))))?;
        if !row.mos.is_finite() {
            return Err(IoError::format(path, format!("row {row_no}: non-finite mos")));
        }
        if !opts.allow_any_range && !(0.0..=1.0).contains(&row.mos) {
            return Err(IoError::Range { path: path.to_path_buf(), row: row_no, mos: row.mos });
        }
        let p = Path::new(row.filename.trim());
        let resolved = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        if !resolved.is_file() {
            missing.push(resolved.display().to_string());
        }
        out.push(LabeledSample { image_path: resolved.to_string_lossy().into_owned(), mos: row.mos });
    }
    if !missing.is_empty() {
        return Err(IoError::MissingFiles { path: path.to_path_buf(), files: missing });
    }
    Ok(out)
}

pub fn write_labels(path: &Path, samples: &[LabeledSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(LABELS_HEADER).map_err(|e| csv_error(path, e))?;
    for s in samples {
        w.write_record([s.image_path.as_str(), &s.mos.to_string()]).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> IoError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IoError::io(path, io),
        other => IoError::format(path, format!("{other:?}")),
    }
}

fn csv_kind(e: csv::Error) -> String {
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => e.to_string(),
    }
}

/// Samples whose images are decoded on every access.
#[derive(Debug, Clone)]
pub struct DiskSource {
    samples: Vec<LabeledSample>,
}

impl DiskSource {
    pub fn new(samples: Vec<LabeledSample>) -> Self {
        Self { samples }
    }

    pub fn from_labels(path: &Path, opts: &LabelOptions) -> Result<Self> {
        Ok(Self::new(read_labels(path, opts)?))
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn path(&self, index: usize) -> PathBuf {
        PathBuf::from(&self.samples[index].image_path)
    }
}

impl SampleSource for DiskSource {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn mos(&self, index: usize) -> f64 {
        self.samples[index].mos
    }

    fn load(&self, index: usize) -> uhdiqa_core::Result<Image> {
        load_image(&self.path(index)).map_err(|e| uhdiqa_core::Error::Source(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(dir: &Path, names: &[&str]) {
        for n in names {
            std::fs::write(dir.join(n), b"").unwrap();
        }
    }

    #[test]
    fn labels_resolve_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), &["a.png", "b.png"]);
        let csv = dir.path().join("labels.csv");
        let abs = dir.path().join("b.png");
        std::fs::write(&csv, format!("filename,mos\na.png,0.5\n{},1\n", abs.display())).unwrap();
        let rows = read_labels(&csv, &LabelOptions::default()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].image_path, dir.path().join("a.png").to_string_lossy());
        assert_eq!(rows[1].image_path, abs.to_string_lossy());
        assert_eq!(rows[1].mos, 1.0);

        let out = dir.path().join("copy.csv");
        write_labels(&out, &rows).unwrap();
        assert_eq!(read_labels(&out, &LabelOptions::default()).unwrap(), rows);
    }

    #[test]
    fn root_overrides_csv_directory() {
        let data = tempfile::tempdir().unwrap();
        let elsewhere = tempfile::tempdir().unwrap();
        touch(data.path(), &["a.png"]);
        let csv = elsewhere.path().join("l.csv");
        std::fs::write(&csv, "filename,mos\na.png,0.5\n").unwrap();
        assert!(matches!(read_labels(&csv, &LabelOptions::default()), Err(IoError::MissingFiles { .. })));
        let opts = LabelOptions { root: Some(data.path().to_path_buf()), ..Default::default() };
        assert_eq!(read_labels(&csv, &opts).unwrap()[0].image_path, data.path().join("a.png").to_string_lossy());
    }

    #[test]
    fn out_of_range_mos_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), &["img0.png", "img1.png"]);
        let csv = dir.path().join("l.csv");
        std::fs::write(&csv, "filename,mos\nimg0.png,0.2\nimg1.png,1.2\n").unwrap();
        match read_labels(&csv, &LabelOptions::default()) {
            Err(IoError::Range { row, mos, .. }) => assert_eq!((row, mos), (2, 1.2)),
            other => panic!("{other:?}"),
        }
        let opts = LabelOptions { allow_any_range: true, ..Default::default() };
        assert_eq!(read_labels(&csv, &opts).unwrap().len(), 2);
    }

    #[test]
    fn missing_images_are_all_listed() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), &["here.png"]);
        let csv = dir.path().join("l.csv");
        std::fs::write(&csv, "filename,mos\ngone1.png,0.1\nhere.png,0.2\ngone2.png,0.3\n").unwrap();
        match read_labels(&csv, &LabelOptions::default()) {
            Err(IoError::MissingFiles { files, .. }) => {
                assert_eq!(files.len(), 2);
                assert!(files[0].ends_with("gone1.png") && files[1].ends_with("gone2.png"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_label_files() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), &["a.png"]);
        let csv = dir.path().join("l.csv");
        let opts = LabelOptions::default();
        std::fs::write(&csv, "image,mos\na.png,1\n").unwrap();
        assert!(matches!(read_labels(&csv, &opts), Err(IoError::Format { .. })));
        std::fs::write(&csv, "filename,mos\na.png,abc\n").unwrap();
        match read_labels(&csv, &opts) {
            Err(e @ IoError::Format { .. }) => assert!(e.to_string().contains("row 1")),
            other => panic!("{other:?}"),
        }
        std::fs::write(&csv, "filename,mos\n").unwrap();
        assert!(read_labels(&csv, &opts).unwrap().is_empty());
        assert!(matches!(read_labels(&dir.path().join("none.csv"), &opts), Err(IoError::Io { .. })));
    }

    #[test]
    fn missing_image_is_a_source_error() {
        let src = DiskSource::new(vec![LabeledSample { image_path: "/nonexistent/x.png".into(), mos: 0.0 }]);
        assert!(matches!(src.load(0), Err(uhdiqa_core::Error::Source(_))));
    }
}
