//! Reference feature extractor: non-overlapping patch embedding, pre-norm
//! transformer encoder blocks with global softmax attention, and mean pooling
//! over tokens. Forward passes can record the activations needed for the
//! hand-written backward pass.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{Init, ParamLayout};
use super::{ExtractorSpec, Normalization};
use crate::real::{mat, Real};
use crate::{Error, Image, Result};

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
struct BlockOffsets {
    ln1_g: usize,
    ln1_b: usize,
    qkv_w: usize,
    qkv_b: usize,
    proj_w: usize,
    proj_b: usize,
    ln2_g: usize,
    ln2_b: usize,
    fc1_w: usize,
    fc1_b: usize,
    fc2_w: usize,
    fc2_b: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Extractor {
    view: usize,
    patch: usize,
    dim: usize,
    heads: usize,
    hidden: usize,
    tokens: usize,
    embed_w: usize,
    embed_b: usize,
    pos: Option<usize>,
    blocks: Vec<BlockOffsets>,
}

struct BlockCache<T> {
    h1: Vec<T>,
    xhat1: Vec<T>,
    rstd1: Vec<T>,
    qkv: Vec<T>,
    probs: Vec<T>,
    attn: Vec<T>,
    h2: Vec<T>,
    xhat2: Vec<T>,
    rstd2: Vec<T>,
    m1: Vec<T>,
    act: Vec<T>,
}

/// Activations recorded by [`Extractor::forward`] for the backward pass.
pub(crate) struct ExtractorCache<T> {
    patches: Vec<T>,
    blocks: Vec<BlockCache<T>>,
}

fn layer_norm<T: Real>(x: &[T], gamma: &[T], beta: &[T], dim: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
    let rows = x.len() / dim;
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); rows];
    let n = T::from_f64(dim as f64);
    let eps = T::from_f64(LN_EPS);
    for r in 0..rows {
        let row = &x[r * dim..(r + 1) * dim];
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let s = T::one() / (var + eps).sqrt();
        rstd[r] = s;
        for j in 0..dim {
            let xh = (row[j] - mean) * s;
            xhat[r * dim + j] = xh;
            y[r * dim + j] = xh * gamma[j] + beta[j];
        }
    }
    (y, xhat, rstd)
}

/// Adds the input gradient of a layer norm into `dx` and accumulates the
/// scale/shift gradients.
#[allow(clippy::too_many_arguments)]
fn layer_norm_backward<T: Real>(
    dy: &[T],
    xhat: &[T],
    rstd: &[T],
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
    dx: &mut [T],
    dim: usize,
) {
    let n = T::from_f64(dim as f64);
    let mut dxhat = vec![T::zero(); dim];
    for (r, &s) in rstd.iter().enumerate() {
        let dy_r = &dy[r * dim..(r + 1) * dim];
        let xh_r = &xhat[r * dim..(r + 1) * dim];
        let mut mean_d = T::zero();
        let mut mean_dx = T::zero();
        for j in 0..dim {
            dgamma[j] += dy_r[j] * xh_r[j];
            dbeta[j] += dy_r[j];
            dxhat[j] = dy_r[j] * gamma[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xh_r[j];
        }
        mean_d /= n;
        mean_dx /= n;
        let out = &mut dx[r * dim..(r + 1) * dim];
        for j in 0..dim {
            out[j] += s * (dxhat[j] - mean_d - xh_r[j] * mean_dx);
        }
    }
}

fn gelu<T: Real>(x: T) -> T {
    let half = T::from_f64(0.5);
    half * x * (T::one() + (x * T::from_f64(core::f64::consts::FRAC_1_SQRT_2)).erf())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let half = T::from_f64(0.5);
    let cdf = half * (T::one() + (x * T::from_f64(core::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-(x * x) * half).exp() * T::from_f64(0.398_942_280_401_432_7);
    cdf + x * pdf
}

fn softmax_rows<T: Real>(s: &mut [T], n: usize) {
    for row in s.chunks_exact_mut(n) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = T::one() / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

impl Extractor {
    pub(crate) fn register(layout: &mut ParamLayout, prefix: &str, spec: &ExtractorSpec, view: usize) -> Self {
        let d = spec.embed_dim;
        let hidden = spec.mlp_hidden();
        let k = spec.patch_size * spec.patch_size * 3;
        let side = view / spec.patch_size;
        let tokens = side * side;
        let mut push = |name: &str, shape: Vec<usize>, init: Init| layout.push(format!("{prefix}.{name}"), shape, init);
        let embed_w = push("embed.weight", vec![k, d], Init::TruncNormal(INIT_STD));
        let embed_b = push("embed.bias", vec![d], Init::Zeros);
        let pos = spec
            .pos_embed
            .then(|| push("pos_embed", vec![tokens, d], Init::TruncNormal(INIT_STD)));
        let blocks = (0..spec.blocks)
            .map(|b| {
                let mut p = |name: &str, shape: Vec<usize>, init: Init| push(&format!("blocks.{b}.{name}"), shape, init);
                BlockOffsets {
                    ln1_g: p("norm1.weight", vec![d], Init::Ones),
                    ln1_b: p("norm1.bias", vec![d], Init::Zeros),
                    qkv_w: p("attn.qkv.weight", vec![d, 3 * d], Init::TruncNormal(INIT_STD)),
                    qkv_b: p("attn.qkv.bias", vec![3 * d], Init::Zeros),
                    proj_w: p("attn.proj.weight", vec![d, d], Init::TruncNormal(INIT_STD)),
                    proj_b: p("attn.proj.bias", vec![d], Init::Zeros),
                    ln2_g: p("norm2.weight", vec![d], Init::Ones),
                    ln2_b: p("norm2.bias", vec![d], Init::Zeros),
                    fc1_w: p("mlp.fc1.weight", vec![d, hidden], Init::TruncNormal(INIT_STD)),
                    fc1_b: p("mlp.fc1.bias", vec![hidden], Init::Zeros),
                    fc2_w: p("mlp.fc2.weight", vec![hidden, d], Init::TruncNormal(INIT_STD)),
                    fc2_b: p("mlp.fc2.bias", vec![d], Init::Zeros),
                }
            })
            .collect();
        Self {
            view,
            patch: spec.patch_size,
            dim: d,
            heads: spec.heads,
            hidden,
            tokens,
            embed_w,
            embed_b,
            pos,
            blocks,
        }
    }

    pub(crate) fn dim(&self) -> usize {
        self.dim
    }

    /// Normalizes `view` and lays it out as `tokens x (patch * patch * 3)`.
    fn patchify<T: Real>(&self, view: &Image, norm: &Normalization) -> Result<Vec<T>> {
        if view.dims() != (self.view, self.view) {
            return Err(Error::ShapeMismatch(format!(
                "view is {}x{}, extractor expects {}x{}",
                view.height(),
                view.width(),
                self.view,
                self.view
            )));
        }
        let p = self.patch;
        let side = self.view / p;
        let k = p * p * 3;
        let scale: [f32; 3] = core::array::from_fn(|c| 1.0 / norm.std[c]);
        let mut out = vec![T::zero(); self.tokens * k];
        for ty in 0..side {
            for tx in 0..side {
                let tok = &mut out[(ty * side + tx) * k..(ty * side + tx + 1) * k];
                for r in 0..p {
                    let src = &view.row(ty * p + r)[tx * p * 3..(tx + 1) * p * 3];
                    for (i, &v) in src.iter().enumerate() {
                        let c = i % 3;
                        tok[r * p * 3 + i] = T::from_f64(((v - norm.mean[c]) * scale[c]) as f64);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Runs the extractor on one normalized view; returns the pooled feature
    /// and, when `record` is set, the activations for [`Self::backward`].
    pub(crate) fn forward<T: Real>(
        &self,
        params: &[T],
        view: &Image,
        norm: &Normalization,
        record: bool,
    ) -> Result<(Vec<T>, Option<ExtractorCache<T>>)> {
        let (t, d, hd) = (self.tokens, self.dim, self.dim / self.heads);
        let k = self.patch * self.patch * 3;
        let w = |off: usize, len: usize| &params[off..off + len];
        let patches = self.patchify::<T>(view, norm)?;

        let mut x = vec![T::zero(); t * d];
        mat::nn(&patches, w(self.embed_w, k * d), &mut x, t, k, d, false);
        mat::add_bias(&mut x, w(self.embed_b, d));
        if let Some(pos) = self.pos {
            for (v, &p) in x.iter_mut().zip(w(pos, t * d)) {
                *v += p;
            }
        }

        let scale = T::from_f64(1.0 / libm::sqrt(hd as f64));
        let mut caches = Vec::with_capacity(if record { self.blocks.len() } else { 0 });
        for b in &self.blocks {
            let (h1, xhat1, rstd1) = layer_norm(&x, w(b.ln1_g, d), w(b.ln1_b, d), d);
            let mut qkv = vec![T::zero(); t * 3 * d];
            mat::nn(&h1, w(b.qkv_w, d * 3 * d), &mut qkv, t, d, 3 * d, false);
            mat::add_bias(&mut qkv, w(b.qkv_b, 3 * d));

            let mut probs = vec![T::zero(); self.heads * t * t];
            let mut attn = vec![T::zero(); t * d];
            for h in 0..self.heads {
                let p = &mut probs[h * t * t..(h + 1) * t * t];
                T::gemm(
                    t,
                    hd,
                    t,
                    scale,
                    (&qkv[h * hd..], 3 * d, 1),
                    (&qkv[d + h * hd..], 1, 3 * d),
                    T::zero(),
                    (p, t, 1),
                );
                softmax_rows(p, t);
                T::gemm(
                    t,
                    t,
                    hd,
                    T::one(),
                    (p, t, 1),
                    (&qkv[2 * d + h * hd..], 3 * d, 1),
                    T::zero(),
                    (&mut attn[h * hd..], d, 1),
                );
            }
            mat::nn(&attn, w(b.proj_w, d * d), &mut x, t, d, d, true);
            mat::add_bias(&mut x, w(b.proj_b, d));

            let (h2, xhat2, rstd2) = layer_norm(&x, w(b.ln2_g, d), w(b.ln2_b, d), d);
            let mut m1 = vec![T::zero(); t * self.hidden];
            mat::nn(&h2, w(b.fc1_w, d * self.hidden), &mut m1, t, d, self.hidden, false);
            mat::add_bias(&mut m1, w(b.fc1_b, self.hidden));
            let act: Vec<T> = m1.iter().map(|&v| gelu(v)).collect();
            mat::nn(&act, w(b.fc2_w, self.hidden * d), &mut x, t, self.hidden, d, true);
            mat::add_bias(&mut x, w(b.fc2_b, d));

            if record {
                caches.push(BlockCache {
                    h1,
                    xhat1,
                    rstd1,
                    qkv,
                    probs,
                    attn,
                    h2,
                    xhat2,
                    rstd2,
                    m1,
                    act,
                });
            }
        }

        let mut feat = vec![T::zero(); d];
        mat::col_sum_into(&x, &mut feat);
        let inv = T::from_f64(1.0 / t as f64);
        feat.iter_mut().for_each(|v| *v *= inv);
        let cache = record.then_some(ExtractorCache { patches, blocks: caches });
        Ok((feat, cache))
    }

    /// Accumulates parameter gradients into `grads` given the gradient of
    /// the pooled feature.
    pub(crate) fn backward<T: Real>(&self, params: &[T], cache: &ExtractorCache<T>, dfeat: &[T], grads: &mut [T]) {
        let (t, d, hd, hid) = (self.tokens, self.dim, self.dim / self.heads, self.hidden);
        let k = self.patch * self.patch * 3;
        let w = |off: usize, len: usize| &params[off..off + len];
        let inv = T::from_f64(1.0 / t as f64);
        let mut dx: Vec<T> = (0..t).flat_map(|_| dfeat.iter().map(move |&g| g * inv)).collect();
        let scale = T::from_f64(1.0 / libm::sqrt(hd as f64));

        for (b, c) in self.blocks.iter().zip(&cache.blocks).rev() {
            // MLP residual branch
            mat::tn(&c.act, &dx, &mut grads[b.fc2_w..b.fc2_w + hid * d], hid, t, d, true);
            mat::col_sum_into(&dx, &mut grads[b.fc2_b..b.fc2_b + d]);
            let mut dm1 = vec![T::zero(); t * hid];
            mat::nt(&dx, w(b.fc2_w, hid * d), &mut dm1, t, d, hid, false);
            for (g, &m) in dm1.iter_mut().zip(&c.m1) {
                *g *= gelu_grad(m);
            }
            mat::tn(&c.h2, &dm1, &mut grads[b.fc1_w..b.fc1_w + d * hid], d, t, hid, true);
            mat::col_sum_into(&dm1, &mut grads[b.fc1_b..b.fc1_b + hid]);
            let mut dh2 = vec![T::zero(); t * d];
            mat::nt(&dm1, w(b.fc1_w, d * hid), &mut dh2, t, hid, d, false);
            let (dg, db) = two_mut(grads, b.ln2_g, b.ln2_b, d);
            layer_norm_backward(&dh2, &c.xhat2, &c.rstd2, w(b.ln2_g, d), dg, db, &mut dx, d);

            // attention residual branch
            mat::tn(&c.attn, &dx, &mut grads[b.proj_w..b.proj_w + d * d], d, t, d, true);
            mat::col_sum_into(&dx, &mut grads[b.proj_b..b.proj_b + d]);
            let mut dattn = vec![T::zero(); t * d];
            mat::nt(&dx, w(b.proj_w, d * d), &mut dattn, t, d, d, false);

            let mut dqkv = vec![T::zero(); t * 3 * d];
            let mut ds = vec![T::zero(); t * t];
            for h in 0..self.heads {
                let p = &c.probs[h * t * t..(h + 1) * t * t];
                // dP = dO V^T
                T::gemm(
                    t,
                    hd,
                    t,
                    T::one(),
                    (&dattn[h * hd..], d, 1),
                    (&c.qkv[2 * d + h * hd..], 1, 3 * d),
                    T::zero(),
                    (&mut ds, t, 1),
                );
                // dV = P^T dO
                T::gemm(
                    t,
                    t,
                    hd,
                    T::one(),
                    (p, 1, t),
                    (&dattn[h * hd..], d, 1),
                    T::zero(),
                    (&mut dqkv[2 * d + h * hd..], 3 * d, 1),
                );
                for (ds_row, p_row) in ds.chunks_exact_mut(t).zip(p.chunks_exact(t)) {
                    let dot = ds_row.iter().zip(p_row).map(|(&a, &b)| a * b).sum::<T>();
                    for (g, &pv) in ds_row.iter_mut().zip(p_row) {
                        *g = pv * (*g - dot);
                    }
                }
                // dQ = scale * dS K ; dK = scale * dS^T Q
                T::gemm(
                    t,
                    t,
                    hd,
                    scale,
                    (&ds, t, 1),
                    (&c.qkv[d + h * hd..], 3 * d, 1),
                    T::zero(),
                    (&mut dqkv[h * hd..], 3 * d, 1),
                );
                T::gemm(
                    t,
                    t,
                    hd,
                    scale,
                    (&ds, 1, t),
                    (&c.qkv[h * hd..], 3 * d, 1),
                    T::zero(),
                    (&mut dqkv[d + h * hd..], 3 * d, 1),
                );
            }
            mat::tn(&c.h1, &dqkv, &mut grads[b.qkv_w..b.qkv_w + d * 3 * d], d, t, 3 * d, true);
            mat::col_sum_into(&dqkv, &mut grads[b.qkv_b..b.qkv_b + 3 * d]);
            let mut dh1 = vec![T::zero(); t * d];
            mat::nt(&dqkv, w(b.qkv_w, d * 3 * d), &mut dh1, t, 3 * d, d, false);
            let (dg, db) = two_mut(grads, b.ln1_g, b.ln1_b, d);
            layer_norm_backward(&dh1, &c.xhat1, &c.rstd1, w(b.ln1_g, d), dg, db, &mut dx, d);
        }

        if let Some(pos) = self.pos {
            for (g, &v) in grads[pos..pos + t * d].iter_mut().zip(&dx) {
                *g += v;
            }
        }
        mat::col_sum_into(&dx, &mut grads[self.embed_b..self.embed_b + d]);
        mat::tn(&cache.patches, &dx, &mut grads[self.embed_w..self.embed_w + k * d], k, t, d, true);
    }
}

/// Two disjoint `len`-long windows of `buf`, `a` before `b`.
fn two_mut<T>(buf: &mut [T], a: usize, b: usize, len: usize) -> (&mut [T], &mut [T]) {
    debug_assert!(a + len <= b);
    let (lo, hi) = buf.split_at_mut(b);
    (&mut lo[a..a + len], &mut hi[..len])
}
