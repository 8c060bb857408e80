use super::*;
use crate::loss::LossWeights;
use crate::preprocess::{preprocess_triplet, SampleMode};
use crate::data::synth_clean_image;

fn small_spec(pos_embed: bool) -> ModelSpec {
    ModelSpec {
        extractor: ExtractorSpec { patch_size: 8, embed_dim: 8, blocks: 1, heads: 2, mlp_ratio: 2.0, pos_embed },
        preprocess: PreprocessConfig { min_side_resize: 40, view_size: 32, grid_n: 4, mini_patch: 8, salient_size: 32 },
        branches: BranchSet::all(),
        norm: Normalization::default(),
        head_hidden: 16,
    }
}

fn inputs(spec: &ModelSpec, n: usize) -> Vec<BranchInputs> {
    (0..n)
        .map(|i| {
            let img = synth_clean_image(44, 52, 100 + i as u64).unwrap();
            preprocess_triplet(&img, &spec.preprocess, SampleMode::Train { seed: i as u64 }).unwrap()
        })
        .collect()
}

#[test]
fn fuse_examples() {
    assert_eq!(fuse(&[1, 2], &[3, 4], &[5, 6]).unwrap(), vec![1, 2, 3, 4, 5, 6]);
    assert_eq!(fuse::<f32>(&[], &[], &[]).unwrap(), Vec::<f32>::new());
    assert!(matches!(fuse(&[1.0], &[2.0, 3.0], &[4.0]), Err(Error::LengthMismatch(_))));
}

#[test]
fn head_width_follows_branches() {
    let all = QualityModel::<f32>::new(small_spec(true), 0).unwrap();
    assert_eq!(all.head_input(), 24);
    let one = QualityModel::<f32>::new(ModelSpec { branches: BranchSet::only(Branch::Aesthetic), ..small_spec(true) }, 0).unwrap();
    assert_eq!(one.head_input(), 8);
    assert!(one.tensor("dis.embed.weight").is_none());
    assert_eq!(one.layout().find("head.fc1.weight").unwrap().shape, vec![8, 16]);
    let x = &inputs(&small_spec(true), 1)[0];
    assert!(one.predict(x).unwrap().is_finite());
    assert!(one.extract_features(Branch::Salient, &x.salient).is_err());
}

#[test]
fn init_is_seeded_and_shaped() {
    let a = QualityModel::<f32>::new(small_spec(true), 7).unwrap();
    assert_eq!(a, QualityModel::<f32>::new(small_spec(true), 7).unwrap());
    assert_ne!(a.params(), QualityModel::<f32>::new(small_spec(true), 8).unwrap().params());
    assert!(a.params().iter().all(|p| p.abs() <= 0.04 + 1e-7 || *p == 1.0));
    assert!(a.tensor("aes.blocks.0.norm1.weight").unwrap().iter().all(|&g| g == 1.0));
    assert!(a.tensor("head.fc1.bias").unwrap().iter().all(|&b| b == 0.0));
    assert_eq!(a.layout().total(), a.params().len());
    let x = &inputs(&small_spec(true), 1)[0];
    assert_eq!(a.predict(x).unwrap(), a.predict(x).unwrap());
}

#[test]
fn from_params_checks_length() {
    let a = QualityModel::<f64>::new(small_spec(false), 1).unwrap();
    let b = QualityModel::from_params(small_spec(false), a.params().to_vec()).unwrap();
    assert_eq!(a, b);
    assert!(matches!(
        QualityModel::<f64>::from_params(small_spec(false), vec![0.0; 3]),
        Err(Error::ShapeMismatch(_))
    ));
}

#[test]
fn constant_token_passes_blocks_unchanged() {
    // every weight zero: layer norm of each token is its bias (zero), both
    // residual branches add nothing, so the pooled feature is the embed bias
    let spec = small_spec(false);
    let mut m = QualityModel::<f64>::new(spec, 3).unwrap();
    m.params_mut().fill(0.0);
    let bias = [0.5, -1.0, 2.0, 0.0, 0.25, 3.0, -0.75, 1.5];
    m.tensor_mut("dis.embed.bias").unwrap().copy_from_slice(&bias);
    let view = synth_clean_image(32, 32, 4).unwrap();
    assert_eq!(m.extract_features(Branch::Distortion, &view).unwrap(), bias.to_vec());
}

#[test]
fn tokens_are_exchangeable_without_positions() {
    let spec = small_spec(false);
    let m = QualityModel::<f64>::new(spec, 5).unwrap();
    let view = synth_clean_image(32, 32, 6).unwrap();
    // swap the top-left and bottom-right 8x8 patches
    let mut swapped = view.clone();
    for r in 0..8 {
        for c in 0..8 {
            swapped.set_pixel(r, c, view.pixel(24 + r, 24 + c));
            swapped.set_pixel(24 + r, 24 + c, view.pixel(r, c));
        }
    }
    let a = m.extract_features(Branch::Aesthetic, &view).unwrap();
    let b = m.extract_features(Branch::Aesthetic, &swapped).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
    let with_pos = QualityModel::<f64>::new(small_spec(true), 5).unwrap();
    let a = with_pos.extract_features(Branch::Aesthetic, &view).unwrap();
    let b = with_pos.extract_features(Branch::Aesthetic, &swapped).unwrap();
    assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-9));
}

#[test]
fn branches_only_see_their_view() {
    let spec = small_spec(true);
    let m = QualityModel::<f64>::new(spec, 2).unwrap();
    let mut x = inputs(&spec, 1).remove(0);
    let dis = m.extract_features(Branch::Distortion, &x.fragment).unwrap();
    let before = m.predict(&x).unwrap();
    x.aesthetic = Image::filled(32, 32, [0.1, 0.9, 0.3]).unwrap();
    assert_eq!(m.extract_features(Branch::Distortion, &x.fragment).unwrap(), dis);
    assert_ne!(m.predict(&x).unwrap(), before);
}

#[test]
fn head_by_hand() {
    let mut layout = ParamLayout::default();
    let head = Head::register(&mut layout, 1, 2);
    // w1 = [1, -1], b1 = [0.5, 0.5], w2 = [2, 3], b2 = 0.25
    let params = [1.0f64, -1.0, 0.5, 0.5, 2.0, 3.0, 0.25];
    let (q, cache) = head.forward(&params, &[2.0]);
    // pre = [2.5, -1.5] -> relu [2.5, 0] -> 5 + 0.25
    assert_eq!(q, 5.25);
    let mut grads = [0.0f64; 7];
    let dfeat = head.backward(&params, &[2.0], &cache, 1.0, &mut grads);
    assert_eq!(dfeat, vec![2.0]);
    assert_eq!(grads, [4.0, 0.0, 2.0, 0.0, 2.5, 0.0, 1.0]);
}

#[test]
fn degenerate_head_gives_constant_scores() {
    let spec = small_spec(true);
    let mut m = QualityModel::<f32>::new(spec, 1).unwrap();
    m.tensor_mut("head.fc2.weight").unwrap().fill(0.0);
    m.tensor_mut("head.fc2.bias").unwrap()[0] = 0.75;
    for x in inputs(&spec, 3) {
        assert_eq!(m.predict(&x).unwrap(), 0.75);
    }
}

#[test]
fn null_objective_has_zero_gradient() {
    let spec = small_spec(true);
    let m = QualityModel::<f64>::new(spec, 1).unwrap();
    let xs = inputs(&spec, 4);
    let objective = Objective { weights: LossWeights { alpha: 0.0, beta: 0.0 }, ..Default::default() };
    let g = m.forward_backward(&xs, &[0.1, 0.4, 0.7, 0.9], &[(0, 1), (2, 3)], &objective).unwrap();
    assert_eq!(g.loss, 0.0);
    assert!(g.grads.iter().all(|&v| v == 0.0));
}

#[test]
fn forward_backward_rejects_bad_batches() {
    let spec = small_spec(true);
    let m = QualityModel::<f32>::new(spec, 1).unwrap();
    let xs = inputs(&spec, 3);
    let obj = Objective::default();
    assert!(matches!(m.forward_backward(&xs[..1], &[0.5], &[(0, 0)], &obj), Err(Error::DegenerateBatch(1))));
    assert!(m.forward_backward(&xs, &[0.5, 0.2, 0.1], &[(1, 1)], &obj).is_err());
    assert!(m.forward_backward(&xs, &[0.5, 0.2, 0.1], &[(0, 3)], &obj).is_err());
    assert!(m.forward_backward(&xs, &[0.5, 0.2, 0.1], &[], &obj).is_err());
    assert!(matches!(m.forward_backward(&xs, &[0.5], &[(0, 1)], &obj), Err(Error::LengthMismatch(_))));
}

#[test]
fn gradient_matches_central_differences() {
    let spec = small_spec(true);
    let mut m = QualityModel::<f64>::new(spec, 11).unwrap();
    // larger head weights keep the ReLU units and score gaps away from zero
    for v in m.tensor_mut("head.fc2.weight").unwrap() {
        *v *= 50.0;
    }
    let xs = inputs(&spec, 4);
    let mos = [0.2, 0.9, 0.5, 0.6];
    let pairs = [(0, 1), (2, 3), (1, 2)];
    let obj = Objective::default();
    let g = m.forward_backward(&xs, &mos, &pairs, &obj).unwrap();
    assert!((g.loss - m.batch_loss(&xs, &mos, &pairs, &obj).unwrap()).abs() < 1e-14);
    let n = m.params().len();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in (0..n).step_by(n / 40) {
        let orig = m.params()[k];
        m.params_mut()[k] = orig + h;
        let up = m.batch_loss(&xs, &mos, &pairs, &obj).unwrap();
        m.params_mut()[k] = orig - h;
        let down = m.batch_loss(&xs, &mos, &pairs, &obj).unwrap();
        m.params_mut()[k] = orig;
        let fd = (up - down) / (2.0 * h);
        let err = (fd - g.grads[k]).abs() / fd.abs().max(g.grads[k].abs()).max(1e-6);
        worst = worst.max(err);
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn cast_round_trips_through_f64() {
    let a = QualityModel::<f32>::new(small_spec(true), 9).unwrap();
    let b: QualityModel<f64> = a.cast();
    assert_eq!(b.cast::<f32>(), a);
    let x = &inputs(&small_spec(true), 1)[0];
    assert!((a.predict(x).unwrap() - b.predict(x).unwrap()).abs() < 1e-5);
    assert!(a.describe().contains("branches=aes,dis,sal"));
}
