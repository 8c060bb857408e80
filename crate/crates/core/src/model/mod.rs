//! Three-branch quality model.
//!
//! Every enabled branch owns an independent [`extractor`](ExtractorSpec) that
//! maps its view to a `D`-dimensional feature. Features are concatenated in
//! the fixed order aesthetic, distortion, salient and regressed to a score
//! by a two-layer MLP. All parameters live in one flat vector described by a
//! [`ParamLayout`], which keeps optimizer state, checkpoints and gradient
//! checks simple.

mod extractor;
mod head;
mod params;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::loss::{self, Objective, ScoredPair};
use crate::preprocess::{BranchInputs, PreprocessConfig};
use crate::real::Real;
use crate::{seed, Error, Image, Result};

use extractor::{Extractor, ExtractorCache};
use head::{Head, HeadCache};
pub use params::{ParamLayout, TensorInfo};

/// Hidden width of the regression head.
pub const HEAD_HIDDEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExtractorSpec {
    pub patch_size: usize,
    pub embed_dim: usize,
    pub blocks: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
    /// Learnable per-token positional embedding.
    pub pos_embed: bool,
}

impl Default for ExtractorSpec {
    fn default() -> Self {
        Self {
            patch_size: 16,
            embed_dim: 64,
            blocks: 2,
            heads: 2,
            mlp_ratio: 2.0,
            pos_embed: true,
        }
    }
}

impl ExtractorSpec {
    pub fn mlp_hidden(&self) -> usize {
        libm::round(self.embed_dim as f64 * self.mlp_ratio) as usize
    }

    pub fn tokens(&self, view_size: usize) -> usize {
        let side = view_size / self.patch_size;
        side * side
    }

    pub fn validate(&self, view_size: usize) -> Result<()> {
        if self.patch_size == 0 || self.embed_dim == 0 || self.heads == 0 {
            return Err(Error::InvalidConfig("patch_size, embed_dim and heads must be positive".into()));
        }
        if !view_size.is_multiple_of(self.patch_size) {
            return Err(Error::InvalidConfig(format!(
                "view_size {view_size} is not divisible by patch_size {}",
                self.patch_size
            )));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(Error::InvalidConfig(format!(
                "embed_dim {} is not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if !(self.mlp_ratio > 0.0) || self.mlp_hidden() == 0 {
            return Err(Error::InvalidConfig(format!("mlp_ratio {} gives an empty MLP", self.mlp_ratio)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Branch {
    Aesthetic,
    Distortion,
    Salient,
}

impl Branch {
    pub const ALL: [Branch; 3] = [Branch::Aesthetic, Branch::Distortion, Branch::Salient];

    pub fn short_name(self) -> &'static str {
        match self {
            Branch::Aesthetic => "aes",
            Branch::Distortion => "dis",
            Branch::Salient => "sal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "aes" | "aesthetic" => Some(Branch::Aesthetic),
            "dis" | "distortion" => Some(Branch::Distortion),
            "sal" | "salient" => Some(Branch::Salient),
            _ => None,
        }
    }

    fn bit(self) -> u8 {
        1 << self as u8
    }
}

/// Non-empty subset of branches, iterated in the fixed fusion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BranchSet(u8);

impl Default for BranchSet {
    fn default() -> Self {
        Self::all()
    }
}

impl BranchSet {
    pub fn all() -> Self {
        Self(0b111)
    }

    pub fn only(branch: Branch) -> Self {
        Self(branch.bit())
    }

    pub fn from_branches(branches: impl IntoIterator<Item = Branch>) -> Result<Self> {
        let bits = branches.into_iter().fold(0, |acc, b| acc | b.bit());
        if bits == 0 {
            return Err(Error::InvalidConfig("at least one branch must be enabled".into()));
        }
        Ok(Self(bits))
    }

    /// Parses a comma-separated list such as `aes,dis`.
    pub fn parse(list: &str) -> Result<Self> {
        let mut out = Vec::new();
        for part in list.split(',').filter(|p| !p.trim().is_empty()) {
            out.push(Branch::parse(part).ok_or_else(|| Error::InvalidConfig(format!("unknown branch `{}`", part.trim())))?);
        }
        Self::from_branches(out)
    }

    pub fn contains(self, b: Branch) -> bool {
        self.0 & b.bit() != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Branch> {
        Branch::ALL.into_iter().filter(move |&b| self.contains(b))
    }
}

impl core::fmt::Display for BranchSet {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let names: Vec<&str> = self.iter().map(Branch::short_name).collect();
        f.write_str(&names.join(","))
    }
}

/// Per-channel input normalization applied to `[0, 1]` views.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Normalization {
    fn default() -> Self {
        // ImageNet channel statistics
        Self {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

/// Everything needed to rebuild a model's architecture.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    pub extractor: ExtractorSpec,
    pub preprocess: PreprocessConfig,
    pub branches: BranchSet,
    pub norm: Normalization,
    pub head_hidden: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            extractor: ExtractorSpec::default(),
            preprocess: PreprocessConfig::default(),
            branches: BranchSet::all(),
            norm: Normalization::default(),
            head_hidden: HEAD_HIDDEN,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.extractor.validate(self.preprocess.view_size)?;
        if self.branches.is_empty() {
            return Err(Error::InvalidConfig("no branch enabled".into()));
        }
        if self.head_hidden == 0 {
            return Err(Error::InvalidConfig("head_hidden must be positive".into()));
        }
        if self.norm.std.iter().any(|s| !(*s > 0.0)) || self.norm.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidConfig("normalization std must be positive and mean finite".into()));
        }
        Ok(())
    }
}

/// Concatenates branch features in the order aesthetic, distortion, salient.
pub fn fuse<T: Copy>(f_aes: &[T], f_dis: &[T], f_sal: &[T]) -> Result<Vec<T>> {
    if f_aes.len() != f_dis.len() || f_dis.len() != f_sal.len() {
        return Err(Error::LengthMismatch(format!(
            "feature lengths {}, {}, {}",
            f_aes.len(),
            f_dis.len(),
            f_sal.len()
        )));
    }
    Ok([f_aes, f_dis, f_sal].concat())
}

/// Output of a training forward/backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Mean pair loss over the batch.
    pub loss: f64,
    /// Gradient of `loss` for every parameter, accumulated in 64 bits.
    pub grads: Vec<f64>,
    /// Predicted score of every batch item.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityModel<T> {
    spec: ModelSpec,
    layout: ParamLayout,
    extractors: Vec<(Branch, Extractor)>,
    head: Head,
    params: Vec<T>,
}

struct SampleTrace<T> {
    feat: Vec<T>,
    caches: Vec<ExtractorCache<T>>,
    head: HeadCache<T>,
}

impl<T: Real> QualityModel<T> {
    fn build(spec: &ModelSpec) -> Result<(ParamLayout, Vec<(Branch, Extractor)>, Head)> {
        spec.validate()?;
        let mut layout = ParamLayout::default();
        let extractors: Vec<_> = spec
            .branches
            .iter()
            .map(|b| (b, Extractor::register(&mut layout, b.short_name(), &spec.extractor, spec.preprocess.view_size)))
            .collect();
        let head = Head::register(&mut layout, extractors.len() * spec.extractor.embed_dim, spec.head_hidden);
        Ok((layout, extractors, head))
    }

    /// Fresh model: truncated-normal (std 0.02, cut at two deviations) weights,
    /// zero biases, unit layer-norm scales.
    pub fn new(spec: ModelSpec, init_seed: u64) -> Result<Self> {
        let (layout, extractors, head) = Self::build(&spec)?;
        let mut params = vec![T::zero(); layout.total()];
        let mut rng = seed::rng(init_seed);
        for (info, init) in layout.inits() {
            let dst = &mut params[info.range()];
            match init {
                params::Init::Zeros => {}
                params::Init::Ones => dst.fill(T::one()),
                params::Init::TruncNormal(std) => {
                    let normal = Normal::new(0.0, std).expect("positive std");
                    for v in dst.iter_mut() {
                        let x = loop {
                            let x: f64 = normal.sample(&mut rng);
                            if x.abs() <= 2.0 * std {
                                break x;
                            }
                        };
                        *v = T::from_f64(x);
                    }
                }
            }
        }
        Ok(Self { spec, layout, extractors, head, params })
    }

    pub fn from_params(spec: ModelSpec, params: Vec<T>) -> Result<Self> {
        let (layout, extractors, head) = Self::build(&spec)?;
        if params.len() != layout.total() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters supplied, architecture needs {}",
                params.len(),
                layout.total()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("non-finite parameter".into()));
        }
        Ok(Self { spec, layout, extractors, head, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.layout.find(name).map(|t| &self.params[t.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let range = self.layout.find(name)?.range();
        Some(&mut self.params[range])
    }

    /// Width of the fused feature fed to the head.
    pub fn head_input(&self) -> usize {
        self.head.input()
    }

    pub fn cast<U: Real>(&self) -> QualityModel<U> {
        QualityModel {
            spec: self.spec,
            layout: self.layout.clone(),
            extractors: self.extractors.clone(),
            head: self.head.clone(),
            params: self.params.iter().map(|p| U::from_f64(p.as_f64())).collect(),
        }
    }

    fn extractor(&self, branch: Branch) -> Result<&Extractor> {
        self.extractors
            .iter()
            .find(|(b, _)| *b == branch)
            .map(|(_, e)| e)
            .ok_or_else(|| Error::InvalidConfig(format!("branch `{}` is not enabled", branch.short_name())))
    }

    /// Pooled feature of one branch for a `[0, 1]` view.
    pub fn extract_features(&self, branch: Branch, view: &Image) -> Result<Vec<T>> {
        let e = self.extractor(branch)?;
        Ok(e.forward(&self.params, view, &self.spec.norm, false)?.0)
    }

    fn run(&self, inputs: &BranchInputs, record: bool) -> Result<(T, SampleTrace<T>)> {
        let d = self.spec.extractor.embed_dim;
        let mut feat = Vec::with_capacity(self.extractors.len() * d);
        let mut caches = Vec::new();
        for (branch, e) in &self.extractors {
            let (f, cache) = e.forward(&self.params, inputs.view(*branch), &self.spec.norm, record)?;
            debug_assert_eq!(f.len(), e.dim());
            feat.extend_from_slice(&f);
            caches.extend(cache);
        }
        let (q, head) = self.head.forward(&self.params, &feat);
        Ok((q, SampleTrace { feat, caches, head }))
    }

    /// Predicted quality score; raw head output, not clamped.
    pub fn predict(&self, inputs: &BranchInputs) -> Result<f64> {
        Ok(self.run(inputs, false)?.0.as_f64())
    }

    /// Mean pair loss over `pairs` (indices into `inputs`) and its gradient
    /// with respect to every parameter.
    pub fn forward_backward(
        &self,
        inputs: &[BranchInputs],
        mos: &[f64],
        pairs: &[(usize, usize)],
        objective: &Objective,
    ) -> Result<Gradients> {
        if inputs.len() < 2 {
            return Err(Error::DegenerateBatch(inputs.len()));
        }
        if mos.len() != inputs.len() {
            return Err(Error::LengthMismatch(format!("{} inputs but {} scores", inputs.len(), mos.len())));
        }
        if pairs.is_empty() {
            return Err(Error::DegenerateBatch(inputs.len()));
        }
        if let Some(&(a, b)) = pairs.iter().find(|(a, b)| a == b || *a >= inputs.len() || *b >= inputs.len()) {
            return Err(Error::Domain(format!("invalid pair ({a}, {b})")));
        }
        objective.weights.check_nonnegative()?;

        let mut scores = Vec::with_capacity(inputs.len());
        let mut traces = Vec::with_capacity(inputs.len());
        for x in inputs {
            let (q, tr) = self.run(x, true)?;
            scores.push(q.as_f64());
            traces.push(tr);
        }

        let inv = 1.0 / pairs.len() as f64;
        let mut loss = 0.0;
        let mut dscore = vec![0.0f64; inputs.len()];
        for &(a, b) in pairs {
            let pair = ScoredPair {
                q_x: mos[a],
                q_y: mos[b],
                qhat_x: scores[a],
                qhat_y: scores[b],
            };
            let term = loss::combined_loss_grad(&pair, objective);
            loss += term.value * inv;
            dscore[a] += term.d_qhat_x * inv;
            dscore[b] += term.d_qhat_y * inv;
        }

        let mut grads = vec![0.0f64; self.params.len()];
        let mut local = vec![T::zero(); self.params.len()];
        for (trace, &dq) in traces.iter().zip(&dscore) {
            if dq == 0.0 {
                continue;
            }
            local.fill(T::zero());
            self.backward_sample(trace, T::from_f64(dq), &mut local);
            for (g, &l) in grads.iter_mut().zip(&local) {
                *g += l.as_f64();
            }
        }
        Ok(Gradients { loss, grads, scores })
    }

    fn backward_sample(&self, trace: &SampleTrace<T>, dq: T, grads: &mut [T]) {
        let dfeat = self.head.backward(&self.params, &trace.feat, &trace.head, dq, grads);
        let d = self.spec.extractor.embed_dim;
        for (i, ((_, e), cache)) in self.extractors.iter().zip(&trace.caches).enumerate() {
            e.backward(&self.params, cache, &dfeat[i * d..(i + 1) * d], grads);
        }
    }

    /// Loss only; used by finite-difference checks.
    pub fn batch_loss(&self, inputs: &[BranchInputs], mos: &[f64], pairs: &[(usize, usize)], objective: &Objective) -> Result<f64> {
        let scores = inputs.iter().map(|x| self.predict(x)).collect::<Result<Vec<_>>>()?;
        let inv = 1.0 / pairs.len() as f64;
        Ok(pairs
            .iter()
            .map(|&(a, b)| {
                let pair = ScoredPair {
                    q_x: mos[a],
                    q_y: mos[b],
                    qhat_x: scores[a],
                    qhat_y: scores[b],
                };
                loss::combined_loss_grad(&pair, objective).value * inv
            })
            .sum())
    }

    pub fn describe(&self) -> String {
        format!(
            "branches={} D={} blocks={} heads={} patch={} view={} params={}",
            self.spec.branches,
            self.spec.extractor.embed_dim,
            self.spec.extractor.blocks,
            self.spec.extractor.heads,
            self.spec.extractor.patch_size,
            self.spec.preprocess.view_size,
            self.params.len()
        )
    }
}

#[cfg(test)]
mod tests;
