//! Optimization loop: adaptive-moment updates, step-decay learning rate,
//! pairwise batches, and checkpoint selection on validation SRCC.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use crate::data;
use crate::imaging::Image;
use crate::loss::{LossWeights, Objective, TiePolicy};
use crate::metrics::{MetricsReport, PredictionSet};
use crate::model::{ModelSpec, QualityModel};
use crate::preprocess::{preprocess_triplet, BranchInputs, SampleMode};
use crate::real::Real;
use crate::{seed, Error, Result};

const STREAM_ORDER: u64 = 11;
const STREAM_PAIRS: u64 = 12;
const STREAM_CROP: u64 = 13;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub decay_factor: f64,
    pub decay_every: usize,
    /// Apply the decay a single time at `decay_every` instead of every
    /// `decay_every` epochs.
    pub decay_once: bool,
    pub weights: LossWeights,
    pub ties: TiePolicy,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Use every pair in a batch instead of a random perfect matching.
    pub all_pairs: bool,
    /// Rescale the gradient to this L2 norm when it is larger.
    pub clip_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            batch_size: 12,
            epochs: 100,
            decay_factor: 0.1,
            decay_every: 10,
            decay_once: false,
            weights: LossWeights::default(),
            ties: TiePolicy::Literal,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            all_pairs: false,
            clip_grad_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad(format!("decay_factor must be in (0, 1], got {}", self.decay_factor));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if self.epochs == 0 || self.decay_every == 0 {
            return bad("epochs and decay_every must be positive".into());
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad(format!("betas must be in [0, 1), got ({}, {})", self.beta1, self.beta2));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if let Some(c) = self.clip_grad_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip_grad_norm must be positive, got {c}"));
            }
        }
        if let TiePolicy::Soft { eps } = self.ties {
            if !(eps >= 0.0) {
                return bad(format!("tie eps must be non-negative, got {eps}"));
            }
        }
        self.weights.check_nonnegative()
    }

    pub fn objective(&self) -> Objective {
        Objective { weights: self.weights, ties: self.ties }
    }
}

/// Learning rate for a 0-based epoch.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let steps = if cfg.decay_once {
        usize::from(epoch >= cfg.decay_every)
    } else {
        epoch / cfg.decay_every
    };
    cfg.lr * libm::pow(cfg.decay_factor, steps as f64)
}

/// Per-parameter moments and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }
}

/// One bias-corrected adaptive-moment update. Moments live in 64 bits, the
/// result is rounded into the parameter type.
pub fn optimizer_step<T: Real>(
    params: &mut [T],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(Error::ShapeMismatch(format!(
            "params {}, grads {}, moments {}/{}",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(cfg.beta1, t);
    let c2 = 1.0 - libm::pow(cfg.beta2, t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(state.m.iter_mut()).zip(state.v.iter_mut()) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let upd = lr * (*m / c1) / (libm::sqrt(*v / c2) + cfg.epsilon);
        if upd != 0.0 {
            *p = T::from_f64(p.as_f64() - upd);
        }
    }
    Ok(())
}

/// Indexed access to labelled images.
pub trait SampleSource {
    fn len(&self) -> usize;
    fn mos(&self, index: usize) -> f64;
    fn load(&self, index: usize) -> Result<Image>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Images held in memory.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    pub images: Vec<Image>,
    pub mos: Vec<f64>,
}

impl SampleSource for MemorySource {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn mos(&self, index: usize) -> f64 {
        self.mos[index]
    }

    fn load(&self, index: usize) -> Result<Image> {
        Ok(self.images[index].clone())
    }
}

/// Images kept as 8-bit RGB, the precision they would have on disk.
#[derive(Debug, Clone, Default)]
pub struct QuantizedSource {
    items: Vec<(usize, usize, Vec<u8>, f64)>,
}

impl QuantizedSource {
    pub fn push(&mut self, img: &Image, mos: f64) {
        let bytes = img.data().iter().map(|&v| quantize(v)).collect();
        self.items.push((img.height(), img.width(), bytes, mos));
    }

    pub fn push_bytes(&mut self, height: usize, width: usize, rgb: Vec<u8>, mos: f64) -> Result<()> {
        if rgb.len() != height * width * 3 {
            return Err(Error::ShapeMismatch(format!("{} bytes for {height}x{width}", rgb.len())));
        }
        self.items.push((height, width, rgb, mos));
        Ok(())
    }

    /// Keeps only the listed items, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self { items: indices.iter().map(|&i| self.items[i].clone()).collect() }
    }
}

/// Rounds a `[0, 1]` value to the nearest 8-bit level.
pub fn quantize(v: f32) -> u8 {
    libm::roundf(v.clamp(0.0, 1.0) * 255.0) as u8
}

impl SampleSource for QuantizedSource {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn mos(&self, index: usize) -> f64 {
        self.items[index].3
    }

    fn load(&self, index: usize) -> Result<Image> {
        let (h, w, bytes, _) = &self.items[index];
        Image::new(*h, *w, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }
}

/// SHA-256 of the configuration that produced a checkpoint.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn of(cfg: &TrainConfig, spec: &ModelSpec) -> Self {
        let text = format!("{cfg:?}\n{spec:?}");
        Self(Sha256::digest(text.as_bytes()).into())
    }

    pub fn parse_hex(s: &str) -> Option<Self> {
        if s.len() != 64 || !s.is_ascii() {
            return None;
        }
        let mut out = [0u8; 32];
        for (i, b) in out.iter_mut().enumerate() {
            *b = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
        }
        Some(Self(out))
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|b| write!(f, "{b:02x}"))
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({self})")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: QualityModel<T>,
    pub epoch: usize,
    pub val_metrics: MetricsReport,
    pub fingerprint: Fingerprint,
}

/// One row of the training trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val: MetricsReport,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str = "epoch,lr,train_loss,val_srcc,val_plcc,val_krcc,val_rmse,val_mae";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.epoch, self.lr, self.train_loss, self.val.csv_row())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Best epoch by validation SRCC, earliest on ties.
    pub checkpoint: Checkpoint<T>,
    pub trace: Vec<EpochRecord>,
}

/// Index of the epoch a run keeps: highest SRCC, earliest among equals.
pub fn select_epoch(trace: &[EpochRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in trace.iter().enumerate() {
        if best.is_none_or(|b| r.val.srcc_cmp(&trace[b].val).is_gt()) {
            best = Some(i);
        }
    }
    best
}

/// Eval-mode views for every item of `source`.
pub fn eval_inputs<S: SampleSource + ?Sized>(source: &S, spec: &ModelSpec) -> Result<Vec<BranchInputs>> {
    (0..source.len())
        .map(|i| preprocess_triplet(&source.load(i)?, &spec.preprocess, SampleMode::Eval))
        .collect()
}

/// Scores and metrics on a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<f64>,
    pub labels: Vec<f64>,
    /// Correlations are `NaN` when `undefined` is set.
    pub report: MetricsReport,
    /// Why the correlations could not be computed.
    pub undefined: Option<Error>,
}

impl Evaluation {
    pub fn from_scores(predictions: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        let ps = PredictionSet::new(&predictions, &labels)?;
        let (report, undefined) = match MetricsReport::compute(&ps) {
            Ok(r) => (r, None),
            Err(e @ Error::UndefinedCorrelation(_)) => (MetricsReport::errors_only(&ps), Some(e)),
            Err(e) => return Err(e),
        };
        Ok(Self { predictions, labels, report, undefined })
    }

    /// The full report, or the degenerate-input error.
    pub fn metrics(&self) -> Result<MetricsReport> {
        match &self.undefined {
            Some(e) => Err(e.clone()),
            None => Ok(self.report),
        }
    }
}

fn score_inputs<T: Real>(model: &QualityModel<T>, inputs: &[BranchInputs]) -> Result<Vec<f64>> {
    inputs.iter().map(|x| model.predict(x)).collect()
}

/// Deterministic evaluation with centered crops.
pub fn evaluate<T: Real, S: SampleSource + ?Sized>(model: &QualityModel<T>, dataset: &S) -> Result<Evaluation> {
    if dataset.len() < 2 {
        return Err(Error::DegenerateBatch(dataset.len()));
    }
    let mut predictions = Vec::with_capacity(dataset.len());
    for i in 0..dataset.len() {
        let x = preprocess_triplet(&dataset.load(i)?, &model.spec().preprocess, SampleMode::Eval)?;
        predictions.push(model.predict(&x)?);
    }
    let labels = (0..dataset.len()).map(|i| dataset.mos(i)).collect();
    Evaluation::from_scores(predictions, labels)
}

/// Trains `model` in place and returns the best checkpoint with the
/// per-epoch trace. `observer` sees each trace row as it is produced.
///
/// The model is left at its final-epoch state, which need not be the
/// checkpointed one.
pub fn train<T: Real, S: SampleSource + ?Sized>(
    model: &mut QualityModel<T>,
    train_set: &S,
    val_set: &S,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.len() < cfg.batch_size {
        return Err(Error::InvalidConfig(format!(
            "training set has {} items, fewer than batch_size {}",
            train_set.len(),
            cfg.batch_size
        )));
    }
    if val_set.len() < 2 {
        return Err(Error::DegenerateBatch(val_set.len()));
    }
    let spec = *model.spec();
    let objective = cfg.objective();
    let fingerprint = Fingerprint::of(cfg, &spec);
    let val_inputs = eval_inputs(val_set, &spec)?;
    let val_labels: Vec<f64> = (0..val_set.len()).map(|i| val_set.mos(i)).collect();

    let mut state = AdamState::new(model.params().len());
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best: Option<Checkpoint<T>> = None;

    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut seed::rng(seed::derive(cfg.seed, &[STREAM_ORDER, epoch as u64])));

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let mut inputs = Vec::with_capacity(chunk.len());
            let mut mos = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let crop_seed = seed::derive(cfg.seed, &[STREAM_CROP, i as u64, epoch as u64]);
                let img = train_set.load(i)?;
                inputs.push(preprocess_triplet(&img, &spec.preprocess, SampleMode::Train { seed: crop_seed })?);
                mos.push(train_set.mos(i));
            }
            let local: Vec<usize> = (0..chunk.len()).collect();
            let pairs = if cfg.all_pairs {
                data::all_pairs(&local)?
            } else {
                data::sample_pairs(&local, seed::derive(cfg.seed, &[STREAM_PAIRS, epoch as u64, b as u64]))?
            };
            let mut g = model.forward_backward(&inputs, &mos, &pairs, &objective)?;
            if !g.loss.is_finite() || g.grads.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            if let Some(limit) = cfg.clip_grad_norm {
                let norm = libm::sqrt(g.grads.iter().map(|v| v * v).sum::<f64>());
                if norm > limit {
                    let s = limit / norm;
                    g.grads.iter_mut().for_each(|v| *v *= s);
                }
            }
            optimizer_step(model.params_mut(), &g.grads, &mut state, lr, cfg)?;
            loss_sum += g.loss;
            batches += 1;
        }

        let eval = Evaluation::from_scores(score_inputs(model, &val_inputs)?, val_labels.clone())?;
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / batches.max(1) as f64,
            val: eval.report,
        };
        observer(&record);
        trace.push(record);
        if best.as_ref().is_none_or(|c| record.val.srcc_cmp(&c.val_metrics).is_gt()) {
            best = Some(Checkpoint {
                model: model.clone(),
                epoch,
                val_metrics: record.val,
                fingerprint,
            });
        }
    }
    let checkpoint = best.expect("at least one epoch");
    Ok(TrainOutcome { checkpoint, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ExtractorSpec;
    use crate::preprocess::PreprocessConfig;
    use crate::BranchSet;
    use proptest::prelude::*;

    #[test]
    fn lr_schedule_examples() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(0, &cfg), 1e-5);
        assert!((lr_at(9, &cfg) - 1e-5).abs() < 1e-20);
        assert!((lr_at(10, &cfg) - 1e-6).abs() < 1e-18);
        assert!((lr_at(95, &cfg) / 1e-14 - 1.0).abs() < 1e-9);
        let once = TrainConfig { decay_once: true, ..cfg };
        assert!((lr_at(95, &once) - 1e-6).abs() < 1e-18);
        assert_eq!(lr_at(3, &once), 1e-5);
    }

    #[test]
    fn adam_one_step_by_hand() {
        let cfg = TrainConfig::default();
        let mut p = [0.5f64];
        let mut st = AdamState::new(1);
        optimizer_step(&mut p, &[1.0], &mut st, 1e-3, &cfg).unwrap();
        // m = 0.1, v = 0.001; corrected: m̂ = 1, v̂ = 1
        let expected = 0.5 - 1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert_eq!(st.step, 1);
        assert!((st.m[0] - 0.1).abs() < 1e-15 && (st.v[0] - 0.001).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let cfg = TrainConfig::default();
        let mut p = [0.25f32, -1.0];
        let mut st = AdamState::new(2);
        optimizer_step(&mut p, &[0.0, 0.0], &mut st, 0.1, &cfg).unwrap();
        assert_eq!(p, [0.25, -1.0]);
        assert_eq!(st.step, 1);
        assert!(matches!(
            optimizer_step(&mut p, &[0.0], &mut st, 0.1, &cfg),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { batch_size: 1, ..Default::default() },
            TrainConfig { lr: 0.0, ..Default::default() },
            TrainConfig { decay_factor: 1.5, ..Default::default() },
            TrainConfig { decay_factor: 0.0, ..Default::default() },
            TrainConfig { clip_grad_norm: Some(-1.0), ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))), "{bad:?}");
        }
    }

    #[test]
    fn selection_prefers_highest_then_earliest() {
        let rec = |epoch, srcc| EpochRecord {
            epoch,
            lr: 1.0,
            train_loss: 0.0,
            val: MetricsReport { srcc, plcc: 0.0, krcc: 0.0, rmse: 0.0, mae: 0.0 },
        };
        let trace = [rec(0, f64::NAN), rec(1, 0.5), rec(2, 0.7), rec(3, 0.7), rec(4, 0.1)];
        assert_eq!(select_epoch(&trace), Some(2));
        assert_eq!(select_epoch(&trace[..1]), Some(0));
        assert_eq!(select_epoch(&[]), None);
    }

    #[test]
    fn fingerprint_hex_round_trip() {
        let spec = ModelSpec::default();
        let a = Fingerprint::of(&TrainConfig::default(), &spec);
        let b = Fingerprint::of(&TrainConfig { seed: 1, ..Default::default() }, &spec);
        assert_ne!(a, b);
        let hex = format!("{a}");
        assert_eq!(hex.len(), 64);
        assert_eq!(Fingerprint::parse_hex(&hex), Some(a));
        assert_eq!(Fingerprint::parse_hex("zz"), None);
    }

    fn tiny_spec() -> ModelSpec {
        ModelSpec {
            extractor: ExtractorSpec { patch_size: 8, embed_dim: 8, blocks: 1, heads: 1, mlp_ratio: 2.0, pos_embed: true },
            preprocess: PreprocessConfig { min_side_resize: 40, view_size: 32, grid_n: 4, mini_patch: 8, salient_size: 32 },
            branches: BranchSet::all(),
            ..Default::default()
        }
    }

    fn tiny_source(n: usize, s: u64) -> MemorySource {
        let mut src = MemorySource::default();
        for i in 0..n {
            let img = data::synth_clean_image(48, 56, s + i as u64).unwrap();
            let sev = i as f64 / n as f64;
            let recipe = data::DistortionRecipe { kind: data::DistortionKind::GaussianNoise, severity: sev };
            let (img, mos) = data::synth_distort(&img, &recipe, i as u64).unwrap();
            src.images.push(img);
            src.mos.push(mos);
        }
        src
    }

    #[test]
    fn null_objective_leaves_params_untouched() {
        let mut model = QualityModel::<f32>::new(tiny_spec(), 3).unwrap();
        let before = model.params().to_vec();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            lr: 1e-2,
            weights: LossWeights { alpha: 0.0, beta: 0.0 },
            ..Default::default()
        };
        let out = train(&mut model, &tiny_source(8, 0), &tiny_source(4, 50), &cfg, &mut |_| {}).unwrap();
        assert_eq!(model.params(), &before[..]);
        assert_eq!(out.trace.len(), 2);
        assert!(out.trace.iter().all(|r| r.train_loss == 0.0));
    }

    #[test]
    fn runs_are_reproducible_and_select_best() {
        let cfg = TrainConfig { epochs: 3, batch_size: 4, lr: 1e-3, seed: 9, ..Default::default() };
        let run = || {
            let mut model = QualityModel::<f32>::new(tiny_spec(), 1).unwrap();
            let mut seen = Vec::new();
            let out = train(&mut model, &tiny_source(10, 0), &tiny_source(5, 70), &cfg, &mut |r| seen.push(*r)).unwrap();
            (model, out, seen)
        };
        let (m1, o1, seen) = run();
        let (m2, o2, _) = run();
        assert_eq!(m1.params(), m2.params());
        assert_eq!(o1.checkpoint, o2.checkpoint);
        assert_eq!(seen, o1.trace);
        assert_eq!(o1.checkpoint.epoch, select_epoch(&o1.trace).unwrap());
        assert_ne!(m1.params(), QualityModel::<f32>::new(tiny_spec(), 1).unwrap().params());
        // the checkpointed model reproduces its recorded validation metrics
        let ev = evaluate(&o1.checkpoint.model, &tiny_source(5, 70)).unwrap();
        assert_eq!(ev.report, o1.checkpoint.val_metrics);
    }

    #[test]
    fn train_preconditions() {
        let mut model = QualityModel::<f32>::new(tiny_spec(), 1).unwrap();
        let cfg = TrainConfig { epochs: 1, batch_size: 6, ..Default::default() };
        assert!(matches!(
            train(&mut model, &tiny_source(4, 0), &tiny_source(4, 0), &cfg, &mut |_| {}),
            Err(Error::InvalidConfig(_))
        ));
        let cfg = TrainConfig { epochs: 1, batch_size: 2, ..Default::default() };
        assert!(matches!(
            train(&mut model, &tiny_source(4, 0), &tiny_source(1, 0), &cfg, &mut |_| {}),
            Err(Error::DegenerateBatch(1))
        ));
    }

    #[test]
    fn exploding_lr_aborts_before_corrupting_params() {
        let mut model = QualityModel::<f32>::new(tiny_spec(), 2).unwrap();
        let cfg = TrainConfig { epochs: 4, batch_size: 4, lr: 1e30, ..Default::default() };
        match train(&mut model, &tiny_source(8, 0), &tiny_source(4, 40), &cfg, &mut |_| {}) {
            Err(Error::NonFiniteLoss { .. }) | Ok(_) => {}
            Err(e) => panic!("unexpected {e:?}"),
        }
        assert!(model.params().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn constant_model_reports_errors_only() {
        let mut model = QualityModel::<f64>::new(tiny_spec(), 2).unwrap();
        model.tensor_mut("head.fc2.weight").unwrap().fill(0.0);
        model.tensor_mut("head.fc2.bias").unwrap().fill(0.25);
        let src = tiny_source(6, 3);
        let ev = evaluate(&model, &src).unwrap();
        assert!(matches!(ev.undefined, Some(Error::UndefinedCorrelation(_))));
        assert!(ev.metrics().is_err());
        assert!(ev.report.srcc.is_nan());
        assert!(ev.report.rmse.is_finite() && ev.report.rmse >= ev.report.mae);
        assert_eq!(evaluate(&model, &src).unwrap().report.rmse, ev.report.rmse);
    }

    #[test]
    fn quantized_source_round_trips_bytes() {
        let img = data::synth_clean_image(10, 12, 4).unwrap();
        let mut q = QuantizedSource::default();
        q.push(&img, 0.5);
        let back = q.load(0).unwrap();
        assert!(back.data().iter().zip(img.data()).all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-7));
        let mut q2 = QuantizedSource::default();
        q2.push(&back, 0.5);
        assert_eq!(q2.load(0).unwrap(), back);
        assert_eq!(q.select(&[0, 0]).len(), 2);
    }

    proptest! {
        #[test]
        fn lr_is_non_increasing(e in 0usize..200, every in 1usize..20, f in 0.01f64..1.0, once in any::<bool>()) {
            let cfg = TrainConfig { decay_every: every, decay_factor: f, decay_once: once, ..Default::default() };
            prop_assert!(lr_at(e + 1, &cfg) <= lr_at(e, &cfg));
        }
    }
}
