//! Convex noise mixing plus patch-based random central rotation.
//!
//! The mix stage blends a noise sequence into a clip,
//! `M * noise + (1 - M) * clip`. The augment stage splits every frame into
//! `s^2` square patches and rotates each by a random multiple of 90
//! degrees (counter-clockwise) whenever its per-patch draw `p` falls at or
//! below the rotation probability `P`. Decisions are recorded so a
//! transform can be replayed or inverted exactly: rotation only permutes
//! samples inside a patch.
//!
//! With `temporal_lock` off every one of the `n * s^2` patches draws
//! independently; with it on, a spatial site shares one decision across
//! all frames.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, VideoSequence};
use crate::rng::RngStream;

/// The 11-value probability grid P is drawn from.
pub const P_GRID: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Mixing and rotation hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NegMixConfig {
    /// Mixing noise weight in `[0, 1]`.
    pub m: f64,
    /// Rotation probability, on the 0.1 grid.
    pub p: f64,
    /// Patch scale factor: each frame splits into `s^2` patches.
    pub patch_scale: usize,
    /// Share one rotation decision per spatial site across frames.
    pub temporal_lock: bool,
}

impl Default for NegMixConfig {
    fn default() -> Self {
        NegMixConfig {
            m: 0.5,
            p: 0.5,
            patch_scale: 4,
            temporal_lock: false,
        }
    }
}

impl NegMixConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.m) || !self.m.is_finite() {
            return Err(Error::config(format!(
                "negmix.m must lie in [0, 1], got {}",
                self.m
            )));
        }
        if !on_p_grid(self.p) {
            return Err(Error::config(format!(
                "negmix.p must lie on the 0.0..=1.0 grid with step 0.1, got {}",
                self.p
            )));
        }
        if self.patch_scale == 0 {
            return Err(Error::config("negmix.patch_scale must be >= 1"));
        }
        Ok(())
    }
}

pub fn on_p_grid(p: f64) -> bool {
    let scaled = p * 10.0;
    (0.0..=10.0).contains(&scaled) && (scaled - scaled.round()).abs() < 1e-9
}

/// Draw P uniformly from the 11-value grid.
pub fn sample_p(stream: &mut RngStream) -> f64 {
    P_GRID[stream.next_choice(P_GRID.len()).expect("nonzero grid")]
}

/// The recorded outcome for one patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchDecision {
    pub frame: u32,
    pub site: u32,
    /// Practical rotation probability drawn for this patch.
    pub p: f64,
    /// True iff `p <= P`.
    pub rotate: bool,
    /// Angle index into {0, 90, 180, 270} degrees, counter-clockwise.
    pub angle: u8,
}

/// Convex blend `M * noise + (1 - M) * video`, clamped at the boundary.
pub fn mix_noise(video: &VideoSequence, noise: &VideoSequence, m: f64) -> Result<VideoSequence> {
    if !(0.0..=1.0).contains(&m) || !m.is_finite() {
        return Err(Error::invalid(format!("mixing weight must lie in [0, 1], got {m}")));
    }
    if video.shape() != noise.shape() {
        return Err(Error::invalid(format!(
            "mix shape mismatch: {:?} vs {:?}",
            video.shape(),
            noise.shape()
        )));
    }
    let frames = video
        .frames()
        .iter()
        .zip(noise.frames())
        .map(|(v, n)| {
            let (c, h, w) = v.shape();
            let data = v
                .data()
                .iter()
                .zip(n.data())
                .map(|(&vv, &nv)| (m * nv + (1.0 - m) * vv).clamp(0.0, 1.0))
                .collect();
            Frame::new(c, h, w, data).expect("same shape")
        })
        .collect();
    VideoSequence::new(frames)
}

/// Split a clip into `n * s^2` equal patches, frame-major then row-major
/// over the spatial grid. Channels ride along unchanged.
pub fn partition(video: &VideoSequence, s: usize) -> Result<Vec<Frame>> {
    let (n, _, h, w) = video.shape();
    if s == 0 || h % s != 0 || w % s != 0 {
        return Err(Error::invalid(format!(
            "patch scale {s} does not divide frame {h}x{w}"
        )));
    }
    let (ph, pw) = (h / s, w / s);
    let mut patches = Vec::with_capacity(n * s * s);
    for frame in video.frames() {
        for gy in 0..s {
            for gx in 0..s {
                patches.push(frame.crop(gy * ph, gx * pw, ph, pw)?);
            }
        }
    }
    Ok(patches)
}

/// Rotate a square patch counter-clockwise by `90 * k` degrees:
/// one step maps `out[i][j] = in[j][d - 1 - i]`.
pub fn rotate_patch(patch: &Frame, k: u8) -> Result<Frame> {
    let (c, h, w) = patch.shape();
    if h != w {
        return Err(Error::invalid(format!("rotation needs a square patch, got {h}x{w}")));
    }
    let mut out = patch.clone();
    for _ in 0..(k % 4) {
        let prev = out;
        out = Frame::from_fn(c, h, w, |ch, i, j| prev.get(ch, j, h - 1 - i));
    }
    Ok(out)
}

fn patch_geometry(video: &VideoSequence, s: usize) -> Result<(usize, usize)> {
    let (_, _, h, w) = video.shape();
    if s == 0 || h % s != 0 || w % s != 0 {
        return Err(Error::invalid(format!(
            "patch scale {s} does not divide frame {h}x{w}"
        )));
    }
    let (ph, pw) = (h / s, w / s);
    if ph != pw {
        return Err(Error::invalid(format!(
            "rotation needs square patches; scale {s} on {h}x{w} gives {ph}x{pw}"
        )));
    }
    Ok((ph, pw))
}

/// Draw per-patch decisions and rotate where `p <= P`. Decisions come back
/// in patch order for replay.
pub fn neg_augment(
    video: &VideoSequence,
    cfg: &NegMixConfig,
    stream: RngStream,
) -> Result<(VideoSequence, Vec<PatchDecision>)> {
    cfg.validate()?;
    let s = cfg.patch_scale;
    patch_geometry(video, s)?;
    let sites = s * s;
    let mut decisions = Vec::with_capacity(video.len() * sites);
    for f in 0..video.len() {
        for site in 0..sites {
            let lane = if cfg.temporal_lock {
                site as u64
            } else {
                (f * sites + site) as u64
            };
            let mut patch_stream = stream.child(lane);
            let p = patch_stream.next_uniform();
            let angle = patch_stream.next_choice(4)? as u8;
            decisions.push(PatchDecision {
                frame: f as u32,
                site: site as u32,
                p,
                rotate: p <= cfg.p,
                angle,
            });
        }
    }
    let out = apply_decisions(video, s, &decisions)?;
    Ok((out, decisions))
}

/// Replay a recorded decision list onto a clip.
pub fn apply_decisions(
    video: &VideoSequence,
    s: usize,
    decisions: &[PatchDecision],
) -> Result<VideoSequence> {
    replay(video, s, decisions, false)
}

/// Apply the inverse angle per recorded decision, restoring the pre-augment
/// clip bitwise.
pub fn undo_decisions(
    video: &VideoSequence,
    s: usize,
    decisions: &[PatchDecision],
) -> Result<VideoSequence> {
    replay(video, s, decisions, true)
}

fn replay(
    video: &VideoSequence,
    s: usize,
    decisions: &[PatchDecision],
    invert: bool,
) -> Result<VideoSequence> {
    let (ph, _) = patch_geometry(video, s)?;
    let mut out = video.clone();
    for d in decisions {
        if !d.rotate {
            continue;
        }
        let f = d.frame as usize;
        if f >= out.len() || d.site as usize >= s * s {
            return Err(Error::invalid("decision indexes outside the clip"));
        }
        let (gy, gx) = (d.site as usize / s, d.site as usize % s);
        let k = if invert { (4 - d.angle % 4) % 4 } else { d.angle % 4 };
        let frame = out.frame_mut(f);
        let patch = frame.crop(gy * ph, gx * ph, ph, ph)?;
        frame.blit(&rotate_patch(&patch, k)?, gy * ph, gx * ph)?;
    }
    Ok(out)
}

/// The full transform: mix, then rotate, with one shared decision set.
pub fn negmix(
    video: &VideoSequence,
    noise: &VideoSequence,
    cfg: &NegMixConfig,
    stream: RngStream,
) -> Result<(VideoSequence, Vec<PatchDecision>)> {
    let mixed = mix_noise(video, noise, cfg.m)?;
    neg_augment(&mixed, cfg, stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, StreamTags};
    use crate::synth::{flat_noise_clip, natural_clip};

    fn stream(seed: u64) -> RngStream {
        derive_stream(seed, &StreamTags::new("negmix-test", 0, 0, 0))
    }

    #[test]
    fn mix_arithmetic() {
        let v = VideoSequence::new(vec![Frame::constant(1, 4, 4, 0.2); 2]).unwrap();
        let n = VideoSequence::new(vec![Frame::constant(1, 4, 4, 0.8); 2]).unwrap();
        let half = mix_noise(&v, &n, 0.5).unwrap();
        assert!(half.frames().iter().all(|f| f.data().iter().all(|&x| x == 0.5)));
        assert_eq!(mix_noise(&v, &n, 1.0).unwrap(), n);
        assert_eq!(mix_noise(&v, &n, 0.0).unwrap(), v);
        assert!(mix_noise(&v, &n, 1.5).is_err());
        let small = VideoSequence::new(vec![Frame::constant(1, 2, 2, 0.1); 2]).unwrap();
        assert!(mix_noise(&v, &small, 0.5).is_err());
    }

    #[test]
    fn mix_stays_between_inputs() {
        let v = natural_clip(2, 1, 16, 16, 1);
        let n = flat_noise_clip(2, 1, 16, 16, 0.5, 0.05, 2);
        let out = mix_noise(&v, &n, 0.3).unwrap();
        for ((o, a), b) in out
            .frames()
            .iter()
            .flat_map(|f| f.data())
            .zip(v.frames().iter().flat_map(|f| f.data()))
            .zip(n.frames().iter().flat_map(|f| f.data()))
        {
            assert!(*o >= a.min(*b) - 1e-12 && *o <= a.max(*b) + 1e-12);
        }
    }

    #[test]
    fn partition_counts_and_shapes() {
        let v = natural_clip(15, 3, 64, 64, 3);
        let patches = partition(&v, 4).unwrap();
        assert_eq!(patches.len(), 240);
        assert!(patches.iter().all(|p| p.shape() == (3, 16, 16)));
        let whole = partition(&v, 1).unwrap();
        assert_eq!(whole.len(), 15);
        assert_eq!(whole[0], *v.frame(0));
        assert!(partition(&v, 3).is_err());
    }

    #[test]
    fn partition_is_frame_major_row_major() {
        let f = Frame::from_fn(1, 4, 4, |_, y, x| (y * 4 + x) as f64 / 16.0);
        let v = VideoSequence::new(vec![f]).unwrap();
        let patches = partition(&v, 2).unwrap();
        // Row-major grid: top-left, top-right, bottom-left, bottom-right.
        assert_eq!(patches[0].get(0, 0, 0), 0.0);
        assert_eq!(patches[1].get(0, 0, 0), 2.0 / 16.0);
        assert_eq!(patches[2].get(0, 0, 0), 8.0 / 16.0);
        assert_eq!(patches[3].get(0, 0, 0), 10.0 / 16.0);
    }

    #[test]
    fn rotation_definition() {
        let patch = Frame::new(1, 2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap(); // [[a,b],[c,d]]
        let r = rotate_patch(&patch, 1).unwrap();
        // Counter-clockwise: [[b,d],[a,c]]
        assert_eq!(r.data(), &[0.2, 0.4, 0.1, 0.3]);
        assert_eq!(rotate_patch(&patch, 0).unwrap(), patch);
        let full: Frame = (0..4).fold(patch.clone(), |p, _| rotate_patch(&p, 1).unwrap());
        assert_eq!(full, patch);
        assert_eq!(rotate_patch(&patch, 4).unwrap(), patch);
        let tall = Frame::constant(1, 2, 3, 0.0);
        assert!(rotate_patch(&tall, 1).is_err());
    }

    #[test]
    fn p_zero_is_bitwise_identity() {
        let v = natural_clip(3, 3, 32, 32, 4);
        let cfg = NegMixConfig {
            p: 0.0,
            ..NegMixConfig::default()
        };
        let (out, decisions) = neg_augment(&v, &cfg, stream(5)).unwrap();
        assert_eq!(out, v);
        assert!(decisions.iter().all(|d| !d.rotate));
    }

    #[test]
    fn p_one_flags_every_patch() {
        let v = natural_clip(2, 1, 16, 16, 6);
        let cfg = NegMixConfig {
            p: 1.0,
            patch_scale: 2,
            ..NegMixConfig::default()
        };
        let (_, decisions) = neg_augment(&v, &cfg, stream(7)).unwrap();
        assert_eq!(decisions.len(), 2 * 4);
        assert!(decisions.iter().all(|d| d.rotate));
    }

    #[test]
    fn replay_reproduces_and_inverts() {
        let v = natural_clip(4, 3, 32, 32, 8);
        let cfg = NegMixConfig::default();
        let (out, decisions) = neg_augment(&v, &cfg, stream(9)).unwrap();
        let replayed = apply_decisions(&v, cfg.patch_scale, &decisions).unwrap();
        assert_eq!(out, replayed);
        let restored = undo_decisions(&out, cfg.patch_scale, &decisions).unwrap();
        assert_eq!(restored, v);
        // And the whole augment is deterministic.
        let (out2, decisions2) = neg_augment(&v, &cfg, stream(9)).unwrap();
        assert_eq!(out, out2);
        assert_eq!(decisions, decisions2);
    }

    #[test]
    fn temporal_lock_shares_decisions_across_frames() {
        let v = natural_clip(5, 1, 16, 16, 10);
        let cfg = NegMixConfig {
            temporal_lock: true,
            patch_scale: 2,
            ..NegMixConfig::default()
        };
        let (_, decisions) = neg_augment(&v, &cfg, stream(11)).unwrap();
        let sites = 4;
        for site in 0..sites {
            let first = decisions[site];
            for f in 1..5 {
                let d = decisions[f * sites + site];
                assert_eq!((d.p, d.rotate, d.angle), (first.p, first.rotate, first.angle));
            }
        }
        // Unlocked mode draws per frame.
        let (_, free) = neg_augment(
            &v,
            &NegMixConfig {
                temporal_lock: false,
                patch_scale: 2,
                ..NegMixConfig::default()
            },
            stream(11),
        )
        .unwrap();
        assert!((0..sites).any(|site| free[site].p != free[sites + site].p));
    }

    #[test]
    fn negmix_distributes_over_the_mix() {
        let v = natural_clip(3, 3, 32, 32, 12);
        let n = flat_noise_clip(3, 3, 32, 32, 0.5, 0.03, 13);
        for &m in &[0.0, 0.25, 0.5, 1.0] {
            for &p in &[0.0, 0.5, 1.0] {
                let cfg = NegMixConfig {
                    m,
                    p,
                    ..NegMixConfig::default()
                };
                let (mixed_then_rot, decisions) = negmix(&v, &n, &cfg, stream(14)).unwrap();
                let rot_v = apply_decisions(&v, cfg.patch_scale, &decisions).unwrap();
                let rot_n = apply_decisions(&n, cfg.patch_scale, &decisions).unwrap();
                let rot_then_mixed = mix_noise(&rot_v, &rot_n, m).unwrap();
                for (a, b) in mixed_then_rot
                    .frames()
                    .iter()
                    .flat_map(|f| f.data())
                    .zip(rot_then_mixed.frames().iter().flat_map(|f| f.data()))
                {
                    assert!((a - b).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn negmix_identity_at_zero_weights() {
        let v = natural_clip(2, 1, 16, 16, 15);
        let n = flat_noise_clip(2, 1, 16, 16, 0.5, 0.02, 16);
        let cfg = NegMixConfig {
            m: 0.0,
            p: 0.0,
            ..NegMixConfig::default()
        };
        let (out, _) = negmix(&v, &n, &cfg, stream(17)).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn rotation_fraction_tracks_p() {
        // Many patches at P = 0.5: the rotated fraction sits near one half.
        let v = natural_clip(40, 1, 64, 64, 18);
        let cfg = NegMixConfig {
            p: 0.5,
            patch_scale: 16,
            ..NegMixConfig::default()
        };
        let (_, decisions) = neg_augment(&v, &cfg, stream(19)).unwrap();
        assert!(decisions.len() >= 10_000);
        let rotated = decisions.iter().filter(|d| d.rotate).count();
        let fraction = rotated as f64 / decisions.len() as f64;
        assert!((0.48..=0.52).contains(&fraction), "fraction {fraction}");
    }

    #[test]
    fn config_validation() {
        assert!(NegMixConfig { m: 1.5, ..Default::default() }.validate().is_err());
        assert!(NegMixConfig { p: 0.55, ..Default::default() }.validate().is_err());
        assert!(NegMixConfig { patch_scale: 0, ..Default::default() }.validate().is_err());
        assert!(NegMixConfig::default().validate().is_ok());
        let mut s = stream(20);
        for _ in 0..100 {
            assert!(on_p_grid(sample_p(&mut s)));
        }
    }

    #[test]
    fn non_square_patches_are_rejected() {
        let v = natural_clip(1, 1, 32, 64, 21);
        let cfg = NegMixConfig {
            patch_scale: 2,
            ..NegMixConfig::default()
        };
        assert!(neg_augment(&v, &cfg, stream(22)).is_err());
    }
}
