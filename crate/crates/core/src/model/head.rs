use alloc::vec;
use alloc::vec::Vec;

use super::params::{Init, ParamLayout};
use crate::real::Real;

/// Quality regression head: `linear(in -> hidden) -> ReLU -> linear(hidden -> 1)`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Head {
    input: usize,
    hidden: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

pub(crate) struct HeadCache<T> {
    pre: Vec<T>,
}

impl Head {
    pub(crate) fn register(layout: &mut ParamLayout, input: usize, hidden: usize) -> Self {
        let std = Init::TruncNormal(0.02);
        Self {
            input,
            hidden,
            w1: layout.push("head.fc1.weight".into(), vec![input, hidden], std),
            b1: layout.push("head.fc1.bias".into(), vec![hidden], Init::Zeros),
            w2: layout.push("head.fc2.weight".into(), vec![hidden, 1], std),
            b2: layout.push("head.fc2.bias".into(), vec![1], Init::Zeros),
        }
    }

    pub(crate) fn input(&self) -> usize {
        self.input
    }

    pub(crate) fn forward<T: Real>(&self, params: &[T], feat: &[T]) -> (T, HeadCache<T>) {
        let w1 = &params[self.w1..self.w1 + self.input * self.hidden];
        let mut pre = params[self.b1..self.b1 + self.hidden].to_vec();
        for (i, &f) in feat.iter().enumerate() {
            for (z, &w) in pre.iter_mut().zip(&w1[i * self.hidden..(i + 1) * self.hidden]) {
                *z += f * w;
            }
        }
        let w2 = &params[self.w2..self.w2 + self.hidden];
        let mut q = params[self.b2];
        for (&z, &w) in pre.iter().zip(w2) {
            q += z.max(T::zero()) * w;
        }
        (q, HeadCache { pre })
    }

    /// Accumulates head gradients and returns the gradient of the fused feature.
    pub(crate) fn backward<T: Real>(&self, params: &[T], feat: &[T], cache: &HeadCache<T>, dq: T, grads: &mut [T]) -> Vec<T> {
        grads[self.b2] += dq;
        let w2 = &params[self.w2..self.w2 + self.hidden];
        let mut dpre = vec![T::zero(); self.hidden];
        for j in 0..self.hidden {
            let z = cache.pre[j];
            grads[self.w2 + j] += z.max(T::zero()) * dq;
            if z > T::zero() {
                dpre[j] = w2[j] * dq;
            }
        }
        for (g, &d) in grads[self.b1..self.b1 + self.hidden].iter_mut().zip(&dpre) {
            *g += d;
        }
        let w1 = &params[self.w1..self.w1 + self.input * self.hidden];
        let mut dfeat = vec![T::zero(); self.input];
        for (i, &f) in feat.iter().enumerate() {
            let row = i * self.hidden;
            let mut acc = T::zero();
            for j in 0..self.hidden {
                grads[self.w1 + row + j] += f * dpre[j];
                acc += w1[row + j] * dpre[j];
            }
            dfeat[i] = acc;
        }
        dfeat
    }
}
