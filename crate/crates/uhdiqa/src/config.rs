//! Flat TOML experiment configuration.
//!
//! Every key is optional except `version`; missing keys take the library
//! defaults. Unknown keys are rejected. Command-line flags override file
//! values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uhdiqa_core::data::SplitSpec;
use uhdiqa_core::loss::{LossWeights, TiePolicy};
use uhdiqa_core::train::TrainConfig;
use uhdiqa_core::{BranchSet, ExtractorSpec, ModelSpec, Normalization, PreprocessConfig};

use crate::dataset::LabelOptions;
use crate::{IoError, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub version: u32,
    pub seed: u64,
    /// Label CSV of the full dataset, split into train and validation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    /// Base for relative image paths; defaults to the label file's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    /// Accept MOS values outside `[0, 1]`.
    pub allow_any_range: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub train_fraction: f64,

    pub min_side_resize: usize,
    pub view_size: usize,
    pub grid_n: usize,
    pub mini_patch: usize,

    pub patch_size: usize,
    pub embed_dim: usize,
    pub blocks: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
    pub pos_embed: bool,
    pub head_hidden: usize,
    /// Comma-separated subset of `aes`, `dis`, `sal`.
    pub branches: String,

    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub decay_once: bool,
    pub alpha: f64,
    pub beta: f64,
    /// Pairs with ground-truth gap below this get label 0.5.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tie_eps: Option<f64>,
    pub all_pairs: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_grad_norm: Option<f64>,
}

impl Default for CliConfig {
    fn default() -> Self {
        let pre = PreprocessConfig::default();
        let ext = ExtractorSpec::default();
        let tr = TrainConfig::default();
        let spec = ModelSpec::default();
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            labels: None,
            root: None,
            allow_any_range: false,
            out_dir: None,
            train_fraction: SplitSpec::default().train_fraction,
            min_side_resize: pre.min_side_resize,
            view_size: pre.view_size,
            grid_n: pre.grid_n,
            mini_patch: pre.mini_patch,
            patch_size: ext.patch_size,
            embed_dim: ext.embed_dim,
            blocks: ext.blocks,
            heads: ext.heads,
            mlp_ratio: ext.mlp_ratio,
            pos_embed: ext.pos_embed,
            head_hidden: spec.head_hidden,
            branches: spec.branches.to_string(),
            lr: tr.lr,
            batch_size: tr.batch_size,
            epochs: tr.epochs,
            decay_factor: tr.decay_factor,
            decay_every: tr.decay_every,
            decay_once: tr.decay_once,
            alpha: tr.weights.alpha,
            beta: tr.weights.beta,
            tie_eps: None,
            all_pairs: tr.all_pairs,
            clip_grad_norm: tr.clip_grad_norm,
        }
    }
}

impl CliConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(IoError::Config(format!("unsupported config version {}", cfg.version)));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            IoError::Config(m) => IoError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            min_side_resize: self.min_side_resize,
            view_size: self.view_size,
            grid_n: self.grid_n,
            mini_patch: self.mini_patch,
            salient_size: self.view_size,
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        Ok(ModelSpec {
            extractor: ExtractorSpec {
                patch_size: self.patch_size,
                embed_dim: self.embed_dim,
                blocks: self.blocks,
                heads: self.heads,
                mlp_ratio: self.mlp_ratio,
                pos_embed: self.pos_embed,
            },
            preprocess: self.preprocess(),
            branches: BranchSet::parse(&self.branches)?,
            norm: Normalization::default(),
            head_hidden: self.head_hidden,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            decay_factor: self.decay_factor,
            decay_every: self.decay_every,
            decay_once: self.decay_once,
            weights: LossWeights { alpha: self.alpha, beta: self.beta },
            ties: self.tie_eps.map_or(TiePolicy::Literal, |eps| TiePolicy::Soft { eps }),
            seed: self.seed,
            all_pairs: self.all_pairs,
            clip_grad_norm: self.clip_grad_norm,
            ..TrainConfig::default()
        }
    }

    pub fn label_options(&self) -> LabelOptions {
        LabelOptions { root: self.root.clone(), allow_any_range: self.allow_any_range }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec { train_fraction: self.train_fraction, seed: self.seed }
    }

    /// Checks every component invariant.
    pub fn validate(&self) -> Result<()> {
        self.model_spec()?.validate()?;
        let tr = self.train_config();
        tr.validate()?;
        tr.weights.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(IoError::Config(format!("train_fraction {} outside (0, 1)", self.train_fraction)));
        }
        Ok(())
    }
}
