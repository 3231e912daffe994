//! Deterministic synthetic content: textured frames, moving clips, and
//! flat noisy sequences. Used by the toy-training demo, the calibration
//! examples, and tests — everything derives from an explicit seed.

use crate::frame::{Frame, VideoSequence};
use crate::rng::{derive_stream, StreamTags};

/// A textured frame with smooth shading, directional waves, a soft disc,
/// and a little seeded grain — enough spectral content to exercise the
/// degradation kernel tests.
pub fn natural_frame(channels: usize, height: usize, width: usize, seed: u64) -> Frame {
    natural_frame_at(channels, height, width, seed, 0.0)
}

fn natural_frame_at(channels: usize, height: usize, width: usize, seed: u64, t: f64) -> Frame {
    let mut grain = derive_stream(seed, &StreamTags::new("synth-grain", 0, t as u64, 0));
    let mut noise = vec![0.0; channels * height * width];
    for v in &mut noise {
        *v = grain.next_uniform() - 0.5;
    }
    Frame::from_fn(channels, height, width, |c, y, x| {
        let fx = (x as f64 + 0.8 * t) / width as f64;
        let fy = (y as f64 + 0.3 * t) / height as f64;
        let phase = c as f64 * 1.9;
        let wave = 0.18 * (std::f64::consts::TAU * (3.0 * fx + 1.7 * fy) + phase).sin();
        let ramp = 0.2 * fx + 0.1 * fy;
        let d = ((fx - 0.55).powi(2) + (fy - 0.45).powi(2)).sqrt();
        let disc = 0.18 * (1.0 / (1.0 + (60.0 * (d - 0.22)).exp()));
        let g = 0.04 * noise[(c * height + y) * width + x];
        (0.42 + wave + ramp + disc + g).clamp(0.0, 1.0)
    })
}

/// A clip of `n` frames of moving natural content.
pub fn natural_clip(n: usize, channels: usize, height: usize, width: usize, seed: u64) -> VideoSequence {
    let frames = (0..n)
        .map(|i| natural_frame_at(channels, height, width, seed, i as f64))
        .collect();
    VideoSequence::new(frames).expect("n >= 1")
}

/// A flat sequence at `base` brightness with i.i.d. Gaussian grain of the
/// given strength — the kind of content the noise scanner accepts.
pub fn flat_noise_clip(
    n: usize,
    channels: usize,
    height: usize,
    width: usize,
    base: f64,
    sigma: f64,
    seed: u64,
) -> VideoSequence {
    let frames = (0..n)
        .map(|i| {
            let mut s = derive_stream(seed, &StreamTags::new("synth-noise", 0, i as u64, 0));
            Frame::from_fn(channels, height, width, |_, _, _| {
                (base + sigma * s.next_gaussian()).clamp(0.0, 1.0)
            })
        })
        .collect();
    VideoSequence::new(frames).expect("n >= 1")
}
