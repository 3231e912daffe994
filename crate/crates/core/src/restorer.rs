//! A minimal linear restorer with analytic gradients.
//!
//! Per channel: 3x3 reflect-padded convolution plus bias, then a
//! half-pixel bilinear x4 upsample — clamp-free, so the whole map is
//! linear in both the parameters and the pixels. That buys exact
//! verifiability: the hand-derived gradient of the combined loss can be
//! checked against central finite differences to near machine precision,
//! and a small fixed-step gradient-descent loop demonstrates the loss
//! end to end without an autodiff dependency.
//!
//! L1 subgradients use the convention `sign(0) = 0`.

use serde::{Deserialize, Serialize};

use crate::degrade::{apply_chain, sample_chain, ChainTemplate};
use crate::error::{Error, Result};
use crate::filters::{
    conv3x3_param_grad, conv_adjoint, conv_apply, grad_x_adjoint, grad_x_apply, grad_y_adjoint,
    grad_y_apply, up4_adjoint, up4_apply, ConvTaps,
};
use crate::frame::{Frame, VideoSequence};
use crate::io::NoiseBank;
use crate::loss::{aug_np_loss, LossReport, LossWeights, NormMode, PixMode};
use crate::negmix::{negmix, NegMixConfig};
use crate::rng::{derive_stream, RngStream, StreamTags};

/// Fixed spatial upscale factor.
pub const UPSCALE: usize = 4;
/// Parameters per channel: nine kernel taps plus one bias.
pub const PARAMS_PER_CHANNEL: usize = 10;

/// Per-channel 3x3 convolution weights and bias, flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRestorer {
    channels: usize,
    /// Layout: per channel, `[w00..w22 row-major, bias]`.
    params: Vec<f64>,
}

impl ToyRestorer {
    /// Center-one kernel, zero bias: restoration is plain bilinear x4.
    pub fn identity(channels: usize) -> Self {
        let mut params = vec![0.0; channels * PARAMS_PER_CHANNEL];
        for c in 0..channels {
            params[c * PARAMS_PER_CHANNEL + 4] = 1.0;
        }
        ToyRestorer { channels, params }
    }

    pub fn zeros(channels: usize) -> Self {
        ToyRestorer {
            channels,
            params: vec![0.0; channels * PARAMS_PER_CHANNEL],
        }
    }

    /// Small random kernel weights in (-0.1, 0.1), zero bias.
    pub fn seeded(channels: usize, seed: u64) -> Self {
        let mut stream = derive_stream(seed, &StreamTags::new("toy-init", 0, 0, 0));
        let mut params = vec![0.0; channels * PARAMS_PER_CHANNEL];
        for c in 0..channels {
            for t in 0..9 {
                params[c * PARAMS_PER_CHANNEL + t] = stream.next_range(-0.1, 0.1);
            }
        }
        ToyRestorer { channels, params }
    }

    pub fn from_params(channels: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != channels * PARAMS_PER_CHANNEL {
            return Err(Error::invalid(format!(
                "expected {} parameters for {channels} channels, got {}",
                channels * PARAMS_PER_CHANNEL,
                params.len()
            )));
        }
        Ok(ToyRestorer { channels, params })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn kernel(&self, c: usize) -> &[f64] {
        &self.params[c * PARAMS_PER_CHANNEL..c * PARAMS_PER_CHANNEL + 9]
    }

    fn bias(&self, c: usize) -> f64 {
        self.params[c * PARAMS_PER_CHANNEL + 9]
    }
}

/// Depthwise 3x3 conv + bias, then bilinear x4. Linear, clamp-free.
pub fn restore(model: &ToyRestorer, video: &VideoSequence) -> Result<VideoSequence> {
    if video.channels() != model.channels {
        return Err(Error::invalid(format!(
            "model has {} channels, clip has {}",
            model.channels,
            video.channels()
        )));
    }
    let (_, c, h, w) = video.shape();
    video.map_frames(|frame| {
        let mut out = Frame::constant(c, UPSCALE * h, UPSCALE * w, 0.0);
        for ch in 0..c {
            let taps = ConvTaps::conv3x3(model.kernel(ch));
            let mut z = conv_apply(&taps, frame.plane(ch), h, w);
            let bias = model.bias(ch);
            for v in &mut z {
                *v += bias;
            }
            out.plane_mut(ch).copy_from_slice(&up4_apply(&z, h, w));
        }
        Ok(out)
    })
}

fn check_training_shapes(
    model: &ToyRestorer,
    v_lr: &VideoSequence,
    v_neg: &VideoSequence,
    v_hr: &VideoSequence,
) -> Result<()> {
    if v_neg.shape() != v_lr.shape() {
        return Err(Error::invalid("v_neg must share v_lr's shape"));
    }
    let (n, c, h, w) = v_lr.shape();
    if v_hr.shape() != (n, c, UPSCALE * h, UPSCALE * w) {
        return Err(Error::invalid(format!(
            "v_hr shape {:?} is not x{UPSCALE} of v_lr {:?}",
            v_hr.shape(),
            v_lr.shape()
        )));
    }
    if model.channels != c {
        return Err(Error::invalid("model channel count mismatch"));
    }
    Ok(())
}

/// The combined loss with `Y = restore(v_lr)`, `Y_hat = restore(v_neg)`.
pub fn total_loss(
    model: &ToyRestorer,
    v_lr: &VideoSequence,
    v_neg: &VideoSequence,
    v_hr: &VideoSequence,
    weights: &LossWeights,
) -> Result<LossReport> {
    check_training_shapes(model, v_lr, v_neg, v_hr)?;
    let y = restore(model, v_lr)?;
    let y_hat = restore(model, v_neg)?;
    aug_np_loss(
        std::slice::from_ref(&y),
        std::slice::from_ref(v_hr),
        std::slice::from_ref(&y_hat),
        weights,
    )
}

/// Zero-filled gradient carrier shaped like a clip.
fn zeros_like(v: &VideoSequence) -> Vec<Frame> {
    let (_, c, h, w) = v.shape();
    vec![Frame::constant(c, h, w, 0.0); v.len()]
}

#[inline]
fn l1_sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Analytic gradient of the combined loss w.r.t. the model parameters,
/// together with the loss report at the current point.
pub fn loss_and_gradients(
    model: &ToyRestorer,
    v_lr: &VideoSequence,
    v_neg: &VideoSequence,
    v_hr: &VideoSequence,
    weights: &LossWeights,
) -> Result<(LossReport, Vec<f64>)> {
    check_training_shapes(model, v_lr, v_neg, v_hr)?;
    weights.validate()?;
    let y = restore(model, v_lr)?;
    let y_hat = restore(model, v_neg)?;
    let report = aug_np_loss(
        std::slice::from_ref(&y),
        std::slice::from_ref(v_hr),
        std::slice::from_ref(&y_hat),
        weights,
    )?;

    let (_, c, hr_h, hr_w) = y.shape();
    let n_total = y.element_count() as f64;
    let mut g_y = zeros_like(&y);
    let mut g_y_hat = zeros_like(&y_hat);

    // Pixel term (on Y only).
    for (f, (yf, tf)) in y.frames().iter().zip(v_hr.frames()).enumerate() {
        let g = g_y[f].data_mut();
        for (i, (&a, &b)) in yf.data().iter().zip(tf.data()).enumerate() {
            g[i] += weights.alpha
                * match weights.pix_mode {
                    PixMode::L1 => l1_sign(a - b) / n_total,
                    PixMode::L2 => 2.0 * (a - b) / n_total,
                };
        }
    }

    // Perceptual term: pull each feature's L1 cotangent back through the
    // feature operator.
    if weights.beta > 0.0 {
        let scale = weights.beta / (4.0 * n_total);
        let gaussian = ConvTaps::gaussian(1.0);
        let laplacian = ConvTaps::laplacian();
        for (f, (yf, tf)) in y.frames().iter().zip(v_hr.frames()).enumerate() {
            for ch in 0..c {
                let yp = yf.plane(ch);
                let tp = tf.plane(ch);
                let mut acc = vec![0.0; hr_h * hr_w];
                for k in 0..4 {
                    let (fy, ft): (Vec<f64>, Vec<f64>) = match k {
                        0 => (
                            conv_apply(&gaussian, yp, hr_h, hr_w),
                            conv_apply(&gaussian, tp, hr_h, hr_w),
                        ),
                        1 => (grad_x_apply(yp, hr_h, hr_w), grad_x_apply(tp, hr_h, hr_w)),
                        2 => (grad_y_apply(yp, hr_h, hr_w), grad_y_apply(tp, hr_h, hr_w)),
                        _ => (
                            conv_apply(&laplacian, yp, hr_h, hr_w),
                            conv_apply(&laplacian, tp, hr_h, hr_w),
                        ),
                    };
                    let cot: Vec<f64> = fy
                        .iter()
                        .zip(&ft)
                        .map(|(&a, &b)| scale * l1_sign(a - b))
                        .collect();
                    let back = match k {
                        0 => conv_adjoint(&gaussian, &cot, hr_h, hr_w),
                        1 => grad_x_adjoint(&cot, hr_h, hr_w),
                        2 => grad_y_adjoint(&cot, hr_h, hr_w),
                        _ => conv_adjoint(&laplacian, &cot, hr_h, hr_w),
                    };
                    for (a, b) in acc.iter_mut().zip(&back) {
                        *a += b;
                    }
                }
                let g = g_y[f].plane_mut(ch);
                for (gv, av) in g.iter_mut().zip(&acc) {
                    *gv += av;
                }
            }
        }
    }

    // Negative consistency term (acts on Y and Y_hat with opposite signs).
    if weights.lambda > 0.0 {
        match weights.norm_mode {
            NormMode::L2norm => {
                let mut sq = 0.0;
                for (hf, yf) in y_hat.frames().iter().zip(y.frames()) {
                    for (&a, &b) in hf.data().iter().zip(yf.data()) {
                        sq += (a - b) * (a - b);
                    }
                }
                let norm = sq.sqrt();
                if norm > 0.0 {
                    let coef = weights.lambda / norm;
                    for f in 0..y.len() {
                        let hf = y_hat.frame(f).data();
                        let yf = y.frame(f).data();
                        let gh = g_y_hat[f].data_mut();
                        for i in 0..hf.len() {
                            gh[i] += coef * (hf[i] - yf[i]);
                        }
                        let gy = g_y[f].data_mut();
                        for i in 0..hf.len() {
                            gy[i] -= coef * (hf[i] - yf[i]);
                        }
                    }
                }
            }
            NormMode::Mse => {
                let coef = 2.0 * weights.lambda / n_total;
                for f in 0..y.len() {
                    let hf = y_hat.frame(f).data();
                    let yf = y.frame(f).data();
                    let gh = g_y_hat[f].data_mut();
                    let gy = g_y[f].data_mut();
                    for i in 0..hf.len() {
                        let d = coef * (hf[i] - yf[i]);
                        gh[i] += d;
                        gy[i] -= d;
                    }
                }
            }
        }
    }

    // Pull both output cotangents back to the parameters.
    let mut grad = vec![0.0; model.params.len()];
    accumulate_param_grad(model.channels, v_lr, &g_y, &mut grad);
    accumulate_param_grad(model.channels, v_neg, &g_y_hat, &mut grad);
    Ok((report, grad))
}

/// Gradient of the combined loss w.r.t. the parameter vector.
pub fn loss_gradients(
    model: &ToyRestorer,
    v_lr: &VideoSequence,
    v_neg: &VideoSequence,
    v_hr: &VideoSequence,
    weights: &LossWeights,
) -> Result<Vec<f64>> {
    Ok(loss_and_gradients(model, v_lr, v_neg, v_hr, weights)?.1)
}

fn accumulate_param_grad(channels: usize, input: &VideoSequence, cot: &[Frame], grad: &mut [f64]) {
    let (_, _, h, w) = input.shape();
    for (frame, g_out) in input.frames().iter().zip(cot) {
        for ch in 0..channels {
            let g_z = up4_adjoint(g_out.plane(ch), h, w);
            let tap_grads = conv3x3_param_grad(frame.plane(ch), &g_z, h, w);
            let base = ch * PARAMS_PER_CHANNEL;
            for (t, &g) in tap_grads.iter().enumerate() {
                grad[base + t] += g;
            }
            grad[base + 9] += g_z.iter().sum::<f64>();
        }
    }
}

/// Central-difference verification of the analytic gradient. Returns the
/// max relative error with denominator `max(|g_fd|, |g_an|, 1e-8)`.
pub fn finite_diff_check(
    model: &ToyRestorer,
    v_lr: &VideoSequence,
    v_neg: &VideoSequence,
    v_hr: &VideoSequence,
    weights: &LossWeights,
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::invalid("finite-difference step must be > 0"));
    }
    let (_, analytic) = loss_and_gradients(model, v_lr, v_neg, v_hr, weights)?;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for i in 0..analytic.len() {
        let original = probe.params[i];
        probe.params[i] = original + eps;
        let plus = total_loss(&probe, v_lr, v_neg, v_hr, weights)?.total;
        probe.params[i] = original - eps;
        let minus = total_loss(&probe, v_lr, v_neg, v_hr, weights)?.total;
        probe.params[i] = original;
        let fd = (plus - minus) / (2.0 * eps);
        let denom = fd.abs().max(analytic[i].abs()).max(1e-8);
        worst = worst.max((fd - analytic[i]).abs() / denom);
    }
    Ok(worst)
}

/// One prepared training example.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainClip {
    pub v_hr: VideoSequence,
    pub v_lr: VideoSequence,
    pub v_neg: VideoSequence,
}

/// Everything needed to turn HR clips into training examples.
pub struct DatasetSpec<'a> {
    pub hr_clips: &'a [VideoSequence],
    pub template: &'a ChainTemplate,
    pub order: u8,
    pub bank: &'a NoiseBank,
    pub negmix: &'a NegMixConfig,
    pub seed: u64,
}

/// Run each HR clip through degrade -> mix -> rotate, deterministically.
/// Bank entries must match the LR size; longer entries are truncated to
/// the clip length.
pub fn prepare_training_clips(spec: &DatasetSpec<'_>) -> Result<Vec<TrainClip>> {
    if spec.bank.is_empty() {
        return Err(Error::invalid("noise bank has no entries"));
    }
    let mut clips = Vec::with_capacity(spec.hr_clips.len());
    for (i, hr) in spec.hr_clips.iter().enumerate() {
        let vid = i as u64;
        let chain = sample_chain(
            spec.template,
            spec.order,
            derive_stream(spec.seed, &StreamTags::new("train-chain", vid, 0, 0)),
        )?;
        let v_lr = apply_chain(
            hr,
            &chain,
            derive_stream(spec.seed, &StreamTags::new("train-degrade", vid, 0, 0)),
        )?;
        let mut pick = derive_stream(spec.seed, &StreamTags::new("train-bank", vid, 0, 0));
        let entry = &spec.bank.entries[pick.next_choice(spec.bank.len())?];
        let noise = truncate_noise(&entry.noise, &v_lr)?;
        let (v_neg, _) = negmix(
            &v_lr,
            &noise,
            spec.negmix,
            derive_stream(spec.seed, &StreamTags::new("train-negmix", vid, 0, 0)),
        )?;
        clips.push(TrainClip {
            v_hr: hr.clone(),
            v_lr,
            v_neg,
        });
    }
    Ok(clips)
}

fn truncate_noise(noise: &VideoSequence, like: &VideoSequence) -> Result<VideoSequence> {
    let (n, c, h, w) = like.shape();
    let (bn, bc, bh, bw) = noise.shape();
    if bc != c || bh != h || bw != w || bn < n {
        return Err(Error::invalid(format!(
            "bank entry shape {:?} cannot cover clip {:?}",
            noise.shape(),
            like.shape()
        )));
    }
    VideoSequence::new(noise.frames()[..n].to_vec())
}

/// Fixed-step gradient descent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOptions {
    pub steps: usize,
    pub lr: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            steps: 200,
            lr: 0.05,
        }
    }
}

/// One row of the loss trace (loss at the step's parameters, pre-update).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub total: f64,
    pub pix: f64,
    pub per: f64,
    pub aug_n: f64,
}

/// Full-batch gradient descent on the combined loss over prepared clips.
pub fn train_toy(
    model: &mut ToyRestorer,
    clips: &[TrainClip],
    weights: &LossWeights,
    opts: &TrainOptions,
) -> Result<Vec<TraceRow>> {
    if opts.steps == 0 {
        return Err(Error::invalid("training needs steps >= 1"));
    }
    if !(opts.lr > 0.0 && opts.lr.is_finite()) {
        return Err(Error::invalid("learning rate must be finite and > 0"));
    }
    if clips.is_empty() {
        return Err(Error::invalid("training needs at least one clip"));
    }
    let b = clips.len() as f64;
    let mut trace = Vec::with_capacity(opts.steps);
    for step in 0..opts.steps {
        let mut grad = vec![0.0; model.params.len()];
        let mut mean = LossReport::zero();
        for clip in clips {
            let (report, g) = loss_and_gradients(model, &clip.v_lr, &clip.v_neg, &clip.v_hr, weights)?;
            for (acc, gi) in grad.iter_mut().zip(&g) {
                *acc += gi / b;
            }
            mean.pix += report.pix / b;
            mean.per += report.per / b;
            mean.adv += report.adv / b;
            mean.aug_n += report.aug_n / b;
            mean.aug_p += report.aug_p / b;
            mean.total += report.total / b;
        }
        if !mean.total.is_finite() {
            return Err(Error::Numeric {
                step,
                message: format!("loss became non-finite ({})", mean.total),
            });
        }
        trace.push(TraceRow {
            step,
            total: mean.total,
            pix: mean.pix,
            per: mean.per,
            aug_n: mean.aug_n,
        });
        for (p, g) in model.params.iter_mut().zip(&grad) {
            *p -= opts.lr * g;
        }
    }
    Ok(trace)
}
