//! Analytic multiply-accumulate counts.
//!
//! One MAC is one multiply-add. A linear map `in -> out` applied to `T`
//! tokens costs `T·in·out`; the attention score and value-aggregation
//! products cost `T²·D` each summed over heads. Softmax, normalization,
//! activations, residual adds, positional embedding and mean pooling are
//! not counted.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::model::{Branch, BranchSet, ExtractorSpec, ModelSpec};
use crate::preprocess::PreprocessConfig;
use crate::Result;

/// Cost of one extractor on one view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExtractorMacs {
    pub tokens: u64,
    pub embed: u64,
    /// QKV, output projection and MLP over all blocks.
    pub block_linear: u64,
    /// Score and value products over all blocks.
    pub attention: u64,
}

impl ExtractorMacs {
    pub fn total(&self) -> u64 {
        self.embed + self.block_linear + self.attention
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacsBreakdown {
    pub per_branch: Vec<(String, u64)>,
    pub head: u64,
    pub total: u64,
}

impl MacsBreakdown {
    pub const CSV_HEADER: &'static str = "part,macs";

    pub fn csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (name, m) in &self.per_branch {
            out.push_str(&format!("{name},{m}\n"));
        }
        out.push_str(&format!("head,{}\ntotal,{}\n", self.head, self.total));
        out
    }
}

/// One extractor applied to a `height x width` input (cropped down to whole
/// patches).
pub fn extractor_macs(spec: &ExtractorSpec, height: usize, width: usize) -> ExtractorMacs {
    let p = spec.patch_size as u64;
    let t = (height as u64 / p) * (width as u64 / p);
    let d = spec.embed_dim as u64;
    let hid = spec.mlp_hidden() as u64;
    let blocks = spec.blocks as u64;
    ExtractorMacs {
        tokens: t,
        embed: t * p * p * 3 * d,
        block_linear: blocks * t * (d * 3 * d + d * d + d * hid + hid * d),
        attention: blocks * 2 * t * t * d,
    }
}

/// Head cost for `branches` fused features of width `embed_dim`.
pub fn head_macs(branches: usize, embed_dim: usize, hidden: usize) -> u64 {
    (branches * embed_dim * hidden + hidden) as u64
}

/// Pipeline cost for an enabled branch set.
pub fn model_macs(spec: &ModelSpec) -> MacsBreakdown {
    let v = spec.preprocess.view_size;
    let per = extractor_macs(&spec.extractor, v, v).total();
    let per_branch: Vec<(String, u64)> = spec.branches.iter().map(|b| (b.short_name().into(), per)).collect();
    let head = head_macs(per_branch.len(), spec.extractor.embed_dim, spec.head_hidden);
    let total = per_branch.iter().map(|(_, m)| m).sum::<u64>() + head;
    MacsBreakdown { per_branch, head, total }
}

/// Full three-branch pipeline with the default head width.
pub fn macs_estimate(spec: &ExtractorSpec, pre: &PreprocessConfig) -> MacsBreakdown {
    model_macs(&ModelSpec {
        extractor: *spec,
        preprocess: *pre,
        branches: BranchSet::all(),
        ..ModelSpec::default()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolutionRow {
    pub height: usize,
    pub width: usize,
    /// This pipeline: fixed-size views, so independent of the source size.
    pub pipeline: u64,
    /// The same extractors run on the whole source image, for comparison.
    pub full_resolution: u64,
}

impl ResolutionRow {
    pub const CSV_HEADER: &'static str = "height,width,pipeline_macs,full_resolution_macs";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.height, self.width, self.pipeline, self.full_resolution)
    }
}

/// Cost of running every enabled extractor on the native image.
pub fn full_resolution_macs(spec: &ModelSpec, height: usize, width: usize) -> u64 {
    let per = extractor_macs(&spec.extractor, height, width).total();
    spec.branches.len() as u64 * per + head_macs(spec.branches.len(), spec.extractor.embed_dim, spec.head_hidden)
}

/// One row per source size. Fails if a size violates the preprocessing
/// preconditions.
pub fn macs_vs_resolution(spec: &ModelSpec, resolutions: &[(usize, usize)]) -> Result<Vec<ResolutionRow>> {
    let pipeline = model_macs(spec).total;
    let mut rows = vec![];
    for &(h, w) in resolutions {
        spec.preprocess.check_source(h, w)?;
        rows.push(ResolutionRow { height: h, width: w, pipeline, full_resolution: full_resolution_macs(spec, h, w) });
    }
    Ok(rows)
}

/// Branch order used in reports.
pub fn branch_names() -> [&'static str; 3] {
    Branch::ALL.map(Branch::short_name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn head_example() {
        assert_eq!(head_macs(3, 64, 128), 24_704);
        let b = macs_estimate(&ExtractorSpec::default(), &PreprocessConfig::default());
        assert_eq!(b.head, 24_704);
        assert_eq!(b.per_branch.len(), 3);
        assert_eq!(b.total, b.per_branch.iter().map(|p| p.1).sum::<u64>() + b.head);
    }

    #[test]
    fn default_count_by_hand() {
        // 900 tokens, patch 16, D 64, hidden 128, two blocks
        let m = extractor_macs(&ExtractorSpec::default(), 480, 480);
        assert_eq!(m.tokens, 900);
        assert_eq!(m.embed, 900 * 768 * 64);
        assert_eq!(m.block_linear, 2 * 900 * (64 * 192 + 64 * 64 + 64 * 128 * 2));
        assert_eq!(m.attention, 2 * 2 * 900 * 900 * 64);
        let b = macs_estimate(&ExtractorSpec::default(), &PreprocessConfig::default());
        assert_eq!(b.total, 3 * m.total() + 24_704);
    }

    #[test]
    fn doubling_width_ratios() {
        let a = ExtractorSpec::default();
        let b = ExtractorSpec { embed_dim: 128, heads: 2, ..a };
        let (ma, mb) = (extractor_macs(&a, 480, 480), extractor_macs(&b, 480, 480));
        assert_eq!(mb.block_linear, 4 * ma.block_linear);
        assert_eq!(mb.attention, 2 * ma.attention);
        assert_eq!(mb.embed, 2 * ma.embed);
    }

    #[test]
    fn zero_blocks_counts_embedding_and_head() {
        let spec = ExtractorSpec { blocks: 0, ..Default::default() };
        let b = macs_estimate(&spec, &PreprocessConfig::default());
        assert_eq!(b.total, 3 * 900 * 768 * 64 + 24_704);
    }

    #[test]
    fn resolution_table() {
        let spec = ModelSpec::default();
        let rows = macs_vs_resolution(&spec, &[(2160, 3840), (2880, 5120), (4320, 7680)]).unwrap();
        assert!(rows.iter().all(|r| r.pipeline == rows[0].pipeline));
        assert!(rows[0].full_resolution < rows[1].full_resolution && rows[1].full_resolution < rows[2].full_resolution);
        assert!(macs_vs_resolution(&spec, &[(100, 100)]).is_err());
    }

    #[test]
    fn full_resolution_linear_part_scales_with_area() {
        let spec = ExtractorSpec::default();
        let (a, b) = (extractor_macs(&spec, 2160, 3840), extractor_macs(&spec, 4320, 7680));
        assert_eq!(b.tokens, 4 * a.tokens);
        assert_eq!(b.embed + b.block_linear, 4 * (a.embed + a.block_linear));
        assert_eq!(b.attention, 16 * a.attention);
    }

    #[test]
    fn single_branch_pipeline() {
        let spec = ModelSpec { branches: BranchSet::only(Branch::Distortion), ..Default::default() };
        let b = model_macs(&spec);
        assert_eq!(b.per_branch.len(), 1);
        assert_eq!(b.head, 64 * 128 + 128);
        assert_eq!(branch_names(), ["aes", "dis", "sal"]);
    }

    proptest! {
        #[test]
        fn total_grows_with_size(blocks in 0usize..4, dim in 1usize..8, g in 1usize..6) {
            let pre = PreprocessConfig { min_side_resize: 64 * g, view_size: 16 * g, grid_n: g, mini_patch: 16, salient_size: 16 * g };
            let spec = ExtractorSpec { embed_dim: 8 * dim, heads: 1, blocks, ..Default::default() };
            let base = macs_estimate(&spec, &pre).total;
            let deeper = ExtractorSpec { blocks: blocks + 1, ..spec };
            let wider = ExtractorSpec { embed_dim: 8 * dim + 8, ..spec };
            prop_assert!(macs_estimate(&deeper, &pre).total > base);
            prop_assert!(macs_estimate(&wider, &pre).total > base);
            let bigger = PreprocessConfig { min_side_resize: 64 * g + 16, view_size: 16 * g + 16, grid_n: g + 1, salient_size: 16 * g + 16, ..pre };
            prop_assert!(macs_estimate(&spec, &bigger).total > base);
        }
    }
}
