//! Checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `UIQACKPT` |
//! | 4     | format version (u32) |
//! | 4     | header length `n` (u32) |
//! | n     | UTF-8 JSON header |
//! | rest  | parameters as f32, in the order of the header's tensor list |
//!
//! The header holds the model spec (extractor, preprocessing, normalization,
//! branches), the training configuration, the selected epoch, its validation
//! metrics, the configuration fingerprint, and every tensor's name, shape and
//! offset.

use std::path::Path;

use serde::{Deserialize, Serialize};
use uhdiqa_core::metrics::MetricsReport;
use uhdiqa_core::model::TensorInfo;
use uhdiqa_core::train::{Checkpoint, Fingerprint, TrainConfig};
use uhdiqa_core::{ModelSpec, QualityModel};

use crate::{IoError, Result};

pub const MAGIC: &[u8; 8] = b"UIQACKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

/// Metrics with undefined values stored as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct StoredMetrics {
    srcc: Option<f64>,
    plcc: Option<f64>,
    krcc: Option<f64>,
    rmse: Option<f64>,
    mae: Option<f64>,
}

impl From<MetricsReport> for StoredMetrics {
    fn from(m: MetricsReport) -> Self {
        let f = |v: f64| v.is_finite().then_some(v);
        Self { srcc: f(m.srcc), plcc: f(m.plcc), krcc: f(m.krcc), rmse: f(m.rmse), mae: f(m.mae) }
    }
}

impl From<StoredMetrics> for MetricsReport {
    fn from(m: StoredMetrics) -> Self {
        let f = |v: Option<f64>| v.unwrap_or(f64::NAN);
        Self { srcc: f(m.srcc), plcc: f(m.plcc), krcc: f(m.krcc), rmse: f(m.rmse), mae: f(m.mae) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    spec: ModelSpec,
    train: TrainConfig,
    epoch: usize,
    val_metrics: StoredMetrics,
    fingerprint: String,
    tensors: Vec<TensorEntry>,
}

/// A checkpoint together with the training configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedCheckpoint {
    pub checkpoint: Checkpoint<f32>,
    pub train: TrainConfig,
}

impl SavedCheckpoint {
    /// True when the stored fingerprint matches the stored configuration.
    pub fn fingerprint_matches(&self) -> bool {
        Fingerprint::of(&self.train, self.checkpoint.model.spec()) == self.checkpoint.fingerprint
    }
}

pub fn to_bytes(ckpt: &Checkpoint<f32>, train: &TrainConfig) -> Vec<u8> {
    let model = &ckpt.model;
    let header = Header {
        spec: *model.spec(),
        train: *train,
        epoch: ckpt.epoch,
        val_metrics: ckpt.val_metrics.into(),
        fingerprint: ckpt.fingerprint.to_string(),
        tensors: model
            .layout()
            .tensors()
            .iter()
            .map(|t: &TensorInfo| TensorEntry { name: t.name.clone(), shape: t.shape.clone(), offset: t.offset })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 4 * model.params().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<SavedCheckpoint> {
    let bad = |m: String| IoError::format(path, m);
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let n = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let json = bytes.get(16..16 + n).ok_or_else(|| bad("truncated header".into()))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| bad(format!("header: {e}")))?;
    let data = &bytes[16 + n..];
    if !data.len().is_multiple_of(4) {
        return Err(bad("parameter block is not a whole number of f32 values".into()));
    }
    let params: Vec<f32> = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    let model = QualityModel::from_params(header.spec, params)?;
    let expected: Vec<TensorEntry> = model
        .layout()
        .tensors()
        .iter()
        .map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone(), offset: t.offset })
        .collect();
    if expected != header.tensors {
        return Err(bad("tensor table does not match the stored architecture".into()));
    }
    let fingerprint = Fingerprint::parse_hex(&header.fingerprint).ok_or_else(|| bad("malformed fingerprint".into()))?;
    Ok(SavedCheckpoint {
        checkpoint: Checkpoint { model, epoch: header.epoch, val_metrics: header.val_metrics.into(), fingerprint },
        train: header.train,
    })
}

pub fn save(path: &Path, ckpt: &Checkpoint<f32>, train: &TrainConfig) -> Result<()> {
    std::fs::write(path, to_bytes(ckpt, train)).map_err(|e| IoError::io(path, e))
}

pub fn load(path: &Path) -> Result<SavedCheckpoint> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use uhdiqa_core::{ExtractorSpec, PreprocessConfig};

    fn sample() -> (Checkpoint<f32>, TrainConfig) {
        let spec = ModelSpec {
            extractor: ExtractorSpec { patch_size: 8, embed_dim: 8, blocks: 1, heads: 1, ..Default::default() },
            preprocess: PreprocessConfig { min_side_resize: 40, view_size: 32, grid_n: 4, mini_patch: 8, salient_size: 32 },
            ..Default::default()
        };
        let train = TrainConfig { seed: 5, epochs: 3, ..Default::default() };
        let ckpt = Checkpoint {
            model: QualityModel::new(spec, 1).unwrap(),
            epoch: 2,
            val_metrics: MetricsReport { srcc: 0.5, plcc: f64::NAN, krcc: 0.25, rmse: 0.1, mae: 0.05 },
            fingerprint: Fingerprint::of(&train, &spec),
        };
        (ckpt, train)
    }

    #[test]
    fn round_trip() {
        let (ckpt, train) = sample();
        let bytes = to_bytes(&ckpt, &train);
        assert_eq!(&bytes[..8], MAGIC);
        let back = from_bytes(&bytes, Path::new("x")).unwrap();
        assert_eq!(back.checkpoint.model, ckpt.model);
        assert_eq!(back.checkpoint.epoch, 2);
        assert!(back.checkpoint.val_metrics.plcc.is_nan());
        assert_eq!(back.checkpoint.val_metrics.srcc, 0.5);
        assert_eq!(back.train, train);
        assert!(back.fingerprint_matches());
        assert_eq!(to_bytes(&back.checkpoint, &back.train), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let (ckpt, train) = sample();
        let bytes = to_bytes(&ckpt, &train);
        let p = Path::new("x");
        assert!(from_bytes(&bytes[..bytes.len() - 4], p).is_err());
        assert!(from_bytes(&bytes[..10], p).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(from_bytes(&wrong, p).is_err());
        let mut version = bytes.clone();
        version[8] = 9;
        assert!(from_bytes(&version, p).is_err());
    }
}
