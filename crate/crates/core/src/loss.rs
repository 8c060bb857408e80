//! Pairwise training objective.
//!
//! For a pair `(x, y)` with ground-truth scores `q` and predictions `q̂`:
//!
//! * the binary label is `0` when `q(x) >= q(y)` and `1` otherwise, i.e. it
//!   flags pairs where `y` is the better image;
//! * the preference probability of `a` over `b` is `Φ((q̂(a) − q̂(b)) / √2)`;
//! * the fidelity loss is `1 − √(p·p̂) − √((1 − p)(1 − p̂))`;
//! * the squared-error term is `(q(x) − q̂(x))² + (q(y) − q̂(y))²`;
//! * the pair loss is `α·fidelity + β·mse`.
//!
//! Because the label marks `y` as preferred, [`combined_loss`] scores it
//! against the predicted probability that `y` beats `x`.

use alloc::format;

use crate::{Error, Result};

/// Clamp applied to predicted probabilities before the square roots.
pub const P_HAT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossWeights {
    /// Fidelity weight.
    pub alpha: f64,
    /// Squared-error weight.
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 0.1 }
    }
}

impl LossWeights {
    pub fn check_nonnegative(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) || !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "loss weights must be finite and non-negative, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// Full invariant for user-facing configuration: non-negative and not both zero.
    pub fn validate(&self) -> Result<()> {
        self.check_nonnegative()?;
        if self.alpha + self.beta <= 0.0 {
            return Err(Error::InvalidConfig("alpha + beta must be positive".into()));
        }
        Ok(())
    }
}

/// How pairs with equal ground truth are labelled.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TiePolicy {
    /// `q(x) >= q(y)` gives label 0, ties included.
    #[default]
    Literal,
    /// `|q(x) − q(y)| < eps` gives the fractional label 0.5.
    Soft { eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Objective {
    pub weights: LossWeights,
    pub ties: TiePolicy,
}

/// Standard normal CDF, `½·erfc(−z/√2)`.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * core::f64::consts::FRAC_1_SQRT_2)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    // 1 / sqrt(2π)
    0.398_942_280_401_432_7 * libm::exp(-0.5 * z * z)
}

pub fn binary_label(q_x: f64, q_y: f64) -> u8 {
    if q_x >= q_y {
        0
    } else {
        1
    }
}

fn label(q_x: f64, q_y: f64, ties: TiePolicy) -> f64 {
    match ties {
        TiePolicy::Soft { eps } if (q_x - q_y).abs() < eps => 0.5,
        _ => binary_label(q_x, q_y) as f64,
    }
}

/// Probability that the first image is preferred: `Φ((q̂_x − q̂_y)/√2)`.
pub fn pairwise_prob(qhat_x: f64, qhat_y: f64) -> f64 {
    std_normal_cdf((qhat_x - qhat_y) * core::f64::consts::FRAC_1_SQRT_2)
}

/// `1 − √(p·p̂) − √((1 − p)(1 − p̂))` with `p̂` clamped to `[ε, 1 − ε]`.
pub fn fidelity_loss(p: f64, p_hat: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("label {p} outside [0, 1]")));
    }
    if !(0.0..=1.0).contains(&p_hat) {
        return Err(Error::Domain(format!("probability {p_hat} outside [0, 1]")));
    }
    let ph = p_hat.clamp(P_HAT_EPS, 1.0 - P_HAT_EPS);
    Ok(1.0 - libm::sqrt(p * ph) - libm::sqrt((1.0 - p) * (1.0 - ph)))
}

/// Sum of the two squared errors, without halving or averaging.
pub fn mse_pair_loss(q_x: f64, q_y: f64, qhat_x: f64, qhat_y: f64) -> f64 {
    (q_x - qhat_x) * (q_x - qhat_x) + (q_y - qhat_y) * (q_y - qhat_y)
}

/// Ground truth and predictions of one training pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPair {
    pub q_x: f64,
    pub q_y: f64,
    pub qhat_x: f64,
    pub qhat_y: f64,
}

/// Pair loss and its derivatives with respect to both predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLoss {
    pub value: f64,
    pub fidelity: f64,
    pub mse: f64,
    pub d_qhat_x: f64,
    pub d_qhat_y: f64,
}

/// `α·fidelity + β·mse` with the literal tie rule.
pub fn combined_loss(pair: &ScoredPair, weights: &LossWeights) -> f64 {
    combined_loss_grad(
        pair,
        &Objective {
            weights: *weights,
            ties: TiePolicy::Literal,
        },
    )
    .value
}

pub fn combined_loss_grad(pair: &ScoredPair, objective: &Objective) -> PairLoss {
    let LossWeights { alpha, beta } = objective.weights;
    let p = label(pair.q_x, pair.q_y, objective.ties);
    // label 1 means y is preferred, so compare against P(y beats x)
    let z = (pair.qhat_y - pair.qhat_x) * core::f64::consts::FRAC_1_SQRT_2;
    let raw = std_normal_cdf(z);
    let ph = raw.clamp(P_HAT_EPS, 1.0 - P_HAT_EPS);
    let fidelity = 1.0 - libm::sqrt(p * ph) - libm::sqrt((1.0 - p) * (1.0 - ph));
    let mse = mse_pair_loss(pair.q_x, pair.q_y, pair.qhat_x, pair.qhat_y);

    // d fidelity / d p̂, zero where the clamp is active
    let d_fid_dph = if raw == ph {
        -0.5 * libm::sqrt(p / ph) + 0.5 * libm::sqrt((1.0 - p) / (1.0 - ph))
    } else {
        0.0
    };
    let d_fid_dz = d_fid_dph * std_normal_pdf(z);
    let dz = core::f64::consts::FRAC_1_SQRT_2;
    PairLoss {
        value: alpha * fidelity + beta * mse,
        fidelity,
        mse,
        d_qhat_x: alpha * d_fid_dz * -dz + beta * 2.0 * (pair.qhat_x - pair.q_x),
        d_qhat_y: alpha * d_fid_dz * dz + beta * 2.0 * (pair.qhat_y - pair.q_y),
    }
}
