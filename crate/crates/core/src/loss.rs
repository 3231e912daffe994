//! Guidance losses: the negative consistency term, the supervised positive
//! term, and their weighted sum.
//!
//! The perceptual term runs on a fixed deterministic feature stack
//! (Gaussian-blurred copy, horizontal gradient, vertical gradient, 3x3
//! Laplacian, equally weighted) instead of a pretrained network, keeping
//! the multi-term structure intact while staying exactly differentiable.
//! The adversarial slot is pluggable and defaults to a zero critic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{conv_apply, grad_x_apply, grad_y_apply, ConvTaps};
use crate::frame::VideoSequence;

/// How the negative consistency term reduces a sample difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    /// Per-sample Euclidean norm of the flattened difference, averaged
    /// over the batch.
    L2norm,
    /// Mean squared element difference over the whole batch.
    Mse,
}

/// Pixel criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixMode {
    L1,
    L2,
}

/// Every scalar hyperparameter of the combined loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub batch: usize,
    pub norm_mode: NormMode,
    pub pix_mode: PixMode,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.05,
            lambda: 0.5,
            batch: 2,
            norm_mode: NormMode::L2norm,
            pix_mode: PixMode::L1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("lambda", self.lambda),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!(
                    "loss.{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.batch == 0 {
            return Err(Error::config("loss.batch must be >= 1"));
        }
        Ok(())
    }
}

/// Component breakdown; `total = alpha*pix + beta*per + gamma*adv + lambda*aug_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub pix: f64,
    pub per: f64,
    pub adv: f64,
    pub aug_n: f64,
    pub aug_p: f64,
    pub total: f64,
}

impl LossReport {
    pub fn zero() -> Self {
        LossReport {
            pix: 0.0,
            per: 0.0,
            adv: 0.0,
            aug_n: 0.0,
            aug_p: 0.0,
            total: 0.0,
        }
    }
}

/// Pluggable adversarial scorer. The default stub keeps the term at zero
/// while preserving the loss shape; an external critic can supply both a
/// score and its input gradient.
pub trait AdvCritic {
    fn score(&self, y: &[VideoSequence], target: &[VideoSequence]) -> f64;

    /// Gradient of the score w.r.t. `y`'s samples; `None` means zero.
    fn grad(&self, _y: &[VideoSequence], _target: &[VideoSequence]) -> Option<Vec<VideoSequence>> {
        None
    }
}

/// The default critic: contributes nothing.
pub struct ZeroCritic;

impl AdvCritic for ZeroCritic {
    fn score(&self, _y: &[VideoSequence], _target: &[VideoSequence]) -> f64 {
        0.0
    }
}

fn check_pair(a: &VideoSequence, b: &VideoSequence) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!(
            "loss shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn check_batch(a: &[VideoSequence], b: &[VideoSequence]) -> Result<()> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::invalid("loss batches must be non-empty and equal-sized"));
    }
    for (x, y) in a.iter().zip(b) {
        check_pair(x, y)?;
    }
    Ok(())
}

/// Mean absolute error over all elements (the default pixel criterion).
pub fn pixel_loss(y: &VideoSequence, target: &VideoSequence) -> Result<f64> {
    pixel_loss_with(y, target, PixMode::L1)
}

pub fn pixel_loss_with(y: &VideoSequence, target: &VideoSequence, mode: PixMode) -> Result<f64> {
    check_pair(y, target)?;
    let n = y.element_count() as f64;
    let sum: f64 = y
        .frames()
        .iter()
        .zip(target.frames())
        .flat_map(|(a, b)| a.data().iter().zip(b.data()))
        .map(|(&a, &b)| match mode {
            PixMode::L1 => (a - b).abs(),
            PixMode::L2 => (a - b) * (a - b),
        })
        .sum();
    Ok(sum / n)
}

/// The four fixed feature planes of one image plane.
pub(crate) fn feature_stack(plane: &[f64], h: usize, w: usize) -> [Vec<f64>; 4] {
    [
        conv_apply(&ConvTaps::gaussian(1.0), plane, h, w),
        grad_x_apply(plane, h, w),
        grad_y_apply(plane, h, w),
        conv_apply(&ConvTaps::laplacian(), plane, h, w),
    ]
}

/// Mean absolute difference of the fixed feature stack, averaged over the
/// four features. Zero for identical inputs; symmetric in its arguments.
pub fn standin_perceptual_loss(y: &VideoSequence, target: &VideoSequence) -> Result<f64> {
    check_pair(y, target)?;
    let (_, _, h, w) = y.shape();
    let n = y.element_count() as f64;
    let mut feature_sums = [0.0f64; 4];
    for (fy, ft) in y.frames().iter().zip(target.frames()) {
        for c in 0..fy.channels() {
            let sy = feature_stack(fy.plane(c), h, w);
            let st = feature_stack(ft.plane(c), h, w);
            for k in 0..4 {
                feature_sums[k] += sy[k]
                    .iter()
                    .zip(&st[k])
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>();
            }
        }
    }
    Ok(feature_sums.iter().map(|s| s / n).sum::<f64>() / 4.0)
}

/// Negative consistency between the plain and augmented restorations.
pub fn aug_n_loss(y_hat: &[VideoSequence], y: &[VideoSequence], weights: &LossWeights) -> Result<f64> {
    check_batch(y_hat, y)?;
    let b = y_hat.len() as f64;
    match weights.norm_mode {
        NormMode::L2norm => {
            let mut acc = 0.0;
            for (a, c) in y_hat.iter().zip(y) {
                let sq: f64 = a
                    .frames()
                    .iter()
                    .zip(c.frames())
                    .flat_map(|(p, q)| p.data().iter().zip(q.data()))
                    .map(|(&u, &v)| (u - v) * (u - v))
                    .sum();
                acc += sq.sqrt();
            }
            Ok(acc / b)
        }
        NormMode::Mse => {
            let mut acc = 0.0;
            let mut count = 0usize;
            for (a, c) in y_hat.iter().zip(y) {
                acc += a
                    .frames()
                    .iter()
                    .zip(c.frames())
                    .flat_map(|(p, q)| p.data().iter().zip(q.data()))
                    .map(|(&u, &v)| (u - v) * (u - v))
                    .sum::<f64>();
                count += a.element_count();
            }
            Ok(acc / count as f64)
        }
    }
}

/// Positive guidance: `alpha*pix + beta*per + gamma*adv`, batch-averaged.
/// Returns a partial report (negative fields zero).
pub fn aug_p_loss(y: &[VideoSequence], v_hr: &[VideoSequence], weights: &LossWeights) -> Result<LossReport> {
    aug_p_loss_with_critic(y, v_hr, weights, &ZeroCritic)
}

pub fn aug_p_loss_with_critic(
    y: &[VideoSequence],
    v_hr: &[VideoSequence],
    weights: &LossWeights,
    critic: &dyn AdvCritic,
) -> Result<LossReport> {
    weights.validate()?;
    check_batch(y, v_hr)?;
    let b = y.len() as f64;
    let mut pix = 0.0;
    let mut per = 0.0;
    for (a, t) in y.iter().zip(v_hr) {
        pix += pixel_loss_with(a, t, weights.pix_mode)?;
        per += standin_perceptual_loss(a, t)?;
    }
    pix /= b;
    per /= b;
    let adv = critic.score(y, v_hr);
    let aug_p = weights.alpha * pix + weights.beta * per + weights.gamma * adv;
    Ok(LossReport {
        pix,
        per,
        adv,
        aug_n: 0.0,
        aug_p,
        total: aug_p,
    })
}

/// The combined loss: positive guidance plus `lambda` times the negative
/// consistency term.
pub fn aug_np_loss(
    y: &[VideoSequence],
    v_hr: &[VideoSequence],
    y_hat: &[VideoSequence],
    weights: &LossWeights,
) -> Result<LossReport> {
    aug_np_loss_with_critic(y, v_hr, y_hat, weights, &ZeroCritic)
}

pub fn aug_np_loss_with_critic(
    y: &[VideoSequence],
    v_hr: &[VideoSequence],
    y_hat: &[VideoSequence],
    weights: &LossWeights,
    critic: &dyn AdvCritic,
) -> Result<LossReport> {
    let mut report = aug_p_loss_with_critic(y, v_hr, weights, critic)?;
    report.aug_n = aug_n_loss(y, y_hat, weights)?;
    report.total = report.aug_p + weights.lambda * report.aug_n;
    Ok(report)
}
