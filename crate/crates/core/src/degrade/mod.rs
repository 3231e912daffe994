//! Classical degradation kernels and high-order chain composition.
//!
//! A chain is sampled once per clip from a range template (every op's
//! parameters drawn uniformly from its configured range), then applied to
//! all frames of the clip, so a clip sees one coherent degradation. Noise
//! samples still differ per frame through derived streams. The final
//! resize always lands the clip on `round(dim * final_scale)`.

mod jpeg;
mod resample;

pub use jpeg::jpeg_simulate;
pub use resample::{gaussian_blur, resize, resize_to, ResizeMethod};
pub(crate) use resample::{gaussian_kernel as gaussian_kernel_taps, reflect, resample_unclamped};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, VideoSequence};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Poisson,
}

/// Additive or signal-dependent noise, deterministic given the stream.
///
/// Gaussian adds `N(0, level^2)` per sample. Poisson treats `level` as the
/// photon count per unit intensity: each sample becomes
/// `Poisson(v * level) / level`. `level == 0` is the identity for both.
pub fn add_noise(frame: &Frame, kind: NoiseKind, level: f64, mut stream: RngStream) -> Result<Frame> {
    if !level.is_finite() || level < 0.0 {
        return Err(Error::invalid(format!("noise level must be >= 0, got {level}")));
    }
    if level == 0.0 {
        return Ok(frame.clone());
    }
    let out = match kind {
        NoiseKind::Gaussian => {
            frame.map_with(|v| (v + level * stream.next_gaussian()).clamp(0.0, 1.0))
        }
        NoiseKind::Poisson => frame.map_with(|v| {
            (stream.next_poisson((v * level).max(0.0)) as f64 / level).clamp(0.0, 1.0)
        }),
    };
    Ok(out)
}

impl Frame {
    /// Elementwise map with a stateful closure, in data order.
    fn map_with(&self, mut f: impl FnMut(f64) -> f64) -> Frame {
        let (c, h, w) = self.shape();
        let data = self.data().iter().map(|&v| f(v)).collect();
        Frame::new(c, h, w, data).expect("same shape")
    }
}

/// One concrete degradation step with its sampled parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DegradationOp {
    GaussianBlur { sigma: f64 },
    Resize { scale: f64, method: ResizeMethod },
    GaussianNoise { level: f64 },
    PoissonNoise { level: f64 },
    JpegSim { quality: u8 },
}

/// An ordered, fully parameterized chain plus the enforced total scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationChain {
    pub ops: Vec<DegradationOp>,
    pub final_scale: f64,
}

impl DegradationChain {
    pub fn identity() -> Self {
        DegradationChain {
            ops: Vec::new(),
            final_scale: 1.0,
        }
    }
}

/// Parameter ranges for one stage of the template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StageTemplate {
    Blur {
        sigma: [f64; 2],
    },
    Resize {
        scale: [f64; 2],
        #[serde(default = "all_methods")]
        methods: Vec<ResizeMethod>,
    },
    Noise {
        #[serde(default = "gaussian_kind")]
        noise: NoiseKind,
        level: [f64; 2],
    },
    Jpeg {
        quality: [u8; 2],
    },
}

fn all_methods() -> Vec<ResizeMethod> {
    ResizeMethod::ALL.to_vec()
}

fn gaussian_kind() -> NoiseKind {
    NoiseKind::Gaussian
}

/// Range template the sampler draws chains from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainTemplate {
    pub final_scale: f64,
    pub stages: Vec<StageTemplate>,
}

impl Default for ChainTemplate {
    fn default() -> Self {
        ChainTemplate {
            final_scale: 0.25,
            stages: vec![
                StageTemplate::Blur { sigma: [0.2, 3.0] },
                StageTemplate::Resize {
                    scale: [0.5, 1.5],
                    methods: all_methods(),
                },
                StageTemplate::Noise {
                    noise: NoiseKind::Gaussian,
                    level: [0.0, 0.1],
                },
                StageTemplate::Jpeg { quality: [30, 95] },
            ],
        }
    }
}

impl ChainTemplate {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::invalid("degradation template has no stages"));
        }
        if !self.final_scale.is_finite() || self.final_scale <= 0.0 {
            return Err(Error::config(format!(
                "degrade.final_scale must be > 0, got {}",
                self.final_scale
            )));
        }
        for stage in &self.stages {
            match stage {
                StageTemplate::Blur { sigma: [lo, hi] } => {
                    if !(*lo >= 0.0 && hi >= lo) {
                        return Err(Error::config("degrade blur sigma range invalid"));
                    }
                }
                StageTemplate::Resize { scale: [lo, hi], methods } => {
                    if !(*lo > 0.0 && hi >= lo) || methods.is_empty() {
                        return Err(Error::config("degrade resize range invalid"));
                    }
                }
                StageTemplate::Noise { level: [lo, hi], .. } => {
                    if !(*lo >= 0.0 && hi >= lo) {
                        return Err(Error::config("degrade noise level range invalid"));
                    }
                }
                StageTemplate::Jpeg { quality: [lo, hi] } => {
                    if !(*lo >= 1 && hi >= lo && *hi <= 100) {
                        return Err(Error::config("degrade jpeg quality range invalid"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Draw a concrete chain from the template. `order == 2` repeats the stage
/// template with fresh draws (second-order degradation).
pub fn sample_chain(template: &ChainTemplate, order: u8, mut stream: RngStream) -> Result<DegradationChain> {
    template.validate()?;
    if !(1..=2).contains(&order) {
        return Err(Error::invalid(format!("chain order must be 1 or 2, got {order}")));
    }
    let mut ops = Vec::with_capacity(template.stages.len() * order as usize);
    for _ in 0..order {
        for stage in &template.stages {
            let op = match stage {
                StageTemplate::Blur { sigma: [lo, hi] } => DegradationOp::GaussianBlur {
                    sigma: stream.next_range(*lo, *hi),
                },
                StageTemplate::Resize { scale: [lo, hi], methods } => {
                    let method = methods[stream.next_choice(methods.len())?];
                    DegradationOp::Resize {
                        scale: stream.next_range(*lo, *hi),
                        method,
                    }
                }
                StageTemplate::Noise { noise, level: [lo, hi] } => {
                    let level = stream.next_range(*lo, *hi);
                    match noise {
                        NoiseKind::Gaussian => DegradationOp::GaussianNoise { level },
                        NoiseKind::Poisson => DegradationOp::PoissonNoise { level },
                    }
                }
                StageTemplate::Jpeg { quality: [lo, hi] } => DegradationOp::JpegSim {
                    quality: lo + stream.next_choice(usize::from(hi - lo) + 1)? as u8,
                },
            };
            ops.push(op);
        }
    }
    Ok(DegradationChain {
        ops,
        final_scale: template.final_scale,
    })
}

/// Apply every op in order to every frame, then enforce the final scale.
/// Noise draws use a child stream per (op, frame), so clips share op
/// parameters while frames see independent samples.
pub fn apply_chain(video: &VideoSequence, chain: &DegradationChain, stream: RngStream) -> Result<VideoSequence> {
    if !chain.final_scale.is_finite() || chain.final_scale <= 0.0 {
        return Err(Error::invalid("chain final_scale must be > 0"));
    }
    let target_h = (video.height() as f64 * chain.final_scale + 0.5).floor() as usize;
    let target_w = (video.width() as f64 * chain.final_scale + 0.5).floor() as usize;
    if target_h == 0 || target_w == 0 {
        return Err(Error::invalid("chain final scale collapses the frame"));
    }
    let mut current = video.clone();
    for (k, op) in chain.ops.iter().enumerate() {
        let mut frames = Vec::with_capacity(current.len());
        for (i, frame) in current.iter().enumerate() {
            let out = match op {
                DegradationOp::GaussianBlur { sigma } => gaussian_blur(frame, *sigma)?,
                DegradationOp::Resize { scale, method } => resize(frame, *scale, *method)?,
                DegradationOp::GaussianNoise { level } => add_noise(
                    frame,
                    NoiseKind::Gaussian,
                    *level,
                    stream.child(((k as u64) << 32) | i as u64),
                )?,
                DegradationOp::PoissonNoise { level } => add_noise(
                    frame,
                    NoiseKind::Poisson,
                    *level,
                    stream.child(((k as u64) << 32) | i as u64),
                )?,
                DegradationOp::JpegSim { quality } => jpeg_simulate(frame, *quality)?,
            };
            frames.push(out);
        }
        current = VideoSequence::new(frames)?;
    }
    if (current.height(), current.width()) != (target_h, target_w) {
        current = current.map_frames(|f| resize_to(f, target_h, target_w, ResizeMethod::Bicubic))?;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, StreamTags};
    use crate::synth::natural_clip;

    fn stream(seed: u64) -> RngStream {
        derive_stream(seed, &StreamTags::new("degrade-test", 0, 0, 0))
    }

    #[test]
    fn zero_level_noise_is_identity() {
        let f = Frame::from_fn(1, 8, 8, |_, y, x| (y * 8 + x) as f64 / 63.0);
        for kind in [NoiseKind::Gaussian, NoiseKind::Poisson] {
            let out = add_noise(&f, kind, 0.0, stream(1)).unwrap();
            assert_eq!(f, out);
        }
        assert!(add_noise(&f, NoiseKind::Gaussian, -0.1, stream(1)).is_err());
    }

    #[test]
    fn gaussian_noise_has_requested_spread() {
        let f = Frame::constant(1, 64, 64, 0.5);
        let out = add_noise(&f, NoiseKind::Gaussian, 0.05, stream(2)).unwrap();
        let mean = out.data().iter().sum::<f64>() / out.data().len() as f64;
        let var = out
            .data()
            .iter()
            .map(|&v| (v - mean) * (v - mean))
            .sum::<f64>()
            / out.data().len() as f64;
        let std = var.sqrt();
        assert!((0.045..=0.055).contains(&std), "std {std}");
    }

    #[test]
    fn noise_is_deterministic_per_stream() {
        let f = Frame::constant(1, 16, 16, 0.5);
        let a = add_noise(&f, NoiseKind::Gaussian, 0.05, stream(3)).unwrap();
        let b = add_noise(&f, NoiseKind::Gaussian, 0.05, stream(3)).unwrap();
        assert_eq!(a, b);
        let c = add_noise(&f, NoiseKind::Poisson, 100.0, stream(4)).unwrap();
        let d = add_noise(&f, NoiseKind::Poisson, 100.0, stream(4)).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn poisson_noise_tracks_signal() {
        let f = Frame::constant(1, 64, 64, 0.25);
        let out = add_noise(&f, NoiseKind::Poisson, 200.0, stream(5)).unwrap();
        let mean = out.data().iter().sum::<f64>() / out.data().len() as f64;
        assert!((mean - 0.25).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn sampled_chain_is_deterministic_and_in_range() {
        let tpl = ChainTemplate::default();
        let a = sample_chain(&tpl, 2, stream(6)).unwrap();
        let b = sample_chain(&tpl, 2, stream(6)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ops.len(), 2 * tpl.stages.len());
        for op in &a.ops {
            match op {
                DegradationOp::GaussianBlur { sigma } => assert!((0.2..=3.0).contains(sigma)),
                DegradationOp::Resize { scale, .. } => assert!((0.5..=1.5).contains(scale)),
                DegradationOp::GaussianNoise { level } => assert!((0.0..=0.1).contains(level)),
                DegradationOp::PoissonNoise { level } => assert!((0.0..=0.1).contains(level)),
                DegradationOp::JpegSim { quality } => assert!((30..=95).contains(quality)),
            }
        }
        let one = sample_chain(&tpl, 1, stream(7)).unwrap();
        assert_eq!(one.ops.len(), tpl.stages.len());
        assert!(sample_chain(&tpl, 3, stream(7)).is_err());
        let empty = ChainTemplate {
            stages: vec![],
            ..ChainTemplate::default()
        };
        assert!(sample_chain(&empty, 1, stream(7)).is_err());
    }

    #[test]
    fn identity_chain_is_bitwise_identity() {
        let clip = natural_clip(3, 3, 16, 16, 8);
        let out = apply_chain(&clip, &DegradationChain::identity(), stream(9)).unwrap();
        assert_eq!(clip, out);
    }

    #[test]
    fn default_scale_takes_256_to_64() {
        let clip = natural_clip(2, 1, 256, 256, 10);
        let chain = sample_chain(&ChainTemplate::default(), 2, stream(11)).unwrap();
        let out = apply_chain(&clip, &chain, stream(12)).unwrap();
        assert_eq!(out.shape(), (2, 1, 64, 64));
        assert!(out
            .frames()
            .iter()
            .all(|f| f.data().iter().all(|&v| (0.0..=1.0).contains(&v))));
    }

    #[test]
    fn apply_chain_is_deterministic() {
        let clip = natural_clip(2, 1, 32, 32, 13);
        let chain = sample_chain(&ChainTemplate::default(), 1, stream(14)).unwrap();
        let a = apply_chain(&clip, &chain, stream(15)).unwrap();
        let b = apply_chain(&clip, &chain, stream(15)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_differs_across_frames_with_shared_parameters() {
        let clip = VideoSequence::new(vec![Frame::constant(1, 16, 16, 0.5); 2]).unwrap();
        let chain = DegradationChain {
            ops: vec![DegradationOp::GaussianNoise { level: 0.05 }],
            final_scale: 1.0,
        };
        let out = apply_chain(&clip, &chain, stream(16)).unwrap();
        assert_ne!(out.frame(0), out.frame(1));
    }
}
