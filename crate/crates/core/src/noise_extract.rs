//! Window-sequence scanning and noise-prone sequence selection.
//!
//! A video is tiled into fixed spatial windows tracked across all frames.
//! A window sequence is accepted as real-world noise when every window is
//! low-variance (little texture), every window is bright enough to carry
//! signal, and the per-window statistics barely move over time:
//!
//! * `Var(C_i^j) < sigma` for every frame j
//! * `mean(C_i^j) > mu` for every frame j
//! * `Var_j[Var(C_i^j)] <= sigma_var`
//! * `Var_j[mean(C_i^j)] <= sigma_mean`
//!
//! All variances are population variances (divide by count); the
//! convention is recorded in the bank sidecar. Accepted sequences are
//! copied out at the bank's f32 storage precision, so the statistics kept
//! in metadata are exactly recomputable from the stored entries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, VideoSequence};
use crate::io::{quantize_f32, BankEntry, EntryMeta, NoiseBank};

/// A fixed spatial window tracked across every frame of a video.
#[derive(Debug, Clone, Copy)]
pub struct WindowSequence<'a> {
    video: &'a VideoSequence,
    /// Top-left corner, (x, y) in pixels.
    pub origin: (usize, usize),
    /// Window size, (h, w) in pixels.
    pub size: (usize, usize),
}

impl<'a> WindowSequence<'a> {
    pub fn len(&self) -> usize {
        self.video.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Copy the window of frame `j` (all channels).
    pub fn window(&self, j: usize) -> Frame {
        let (x, y) = self.origin;
        let (h, w) = self.size;
        self.video
            .frame(j)
            .crop(y, x, h, w)
            .expect("tiling keeps windows inside the frame")
    }

    /// Copy the whole sequence out as a clip.
    pub fn to_sequence(&self) -> VideoSequence {
        let frames = (0..self.len()).map(|j| self.window(j)).collect();
        VideoSequence::new(frames).expect("windows share one shape")
    }
}

/// Per-window statistics of one window sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceStats {
    pub window_means: Vec<f64>,
    pub window_vars: Vec<f64>,
    pub var_of_vars: f64,
    pub var_of_means: f64,
}

/// Acceptance thresholds on the `[0, 1]` pixel scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseThresholds {
    pub sigma: f64,
    pub mu: f64,
    pub sigma_var: f64,
    pub sigma_mean: f64,
}

impl Default for NoiseThresholds {
    fn default() -> Self {
        NoiseThresholds {
            sigma: 0.01,
            mu: 0.05,
            sigma_var: 1e-5,
            sigma_mean: 1e-4,
        }
    }
}

impl NoiseThresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma", self.sigma),
            ("mu", self.mu),
            ("sigma_var", self.sigma_var),
            ("sigma_mean", self.sigma_mean),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!(
                    "thresholds.{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Non-overlapping tiling (stride = window size), row-major origin order.
/// A non-divisible remainder at the right/bottom edges is dropped.
pub fn tile_windows(video: &VideoSequence, win: (usize, usize)) -> Result<Vec<WindowSequence<'_>>> {
    tile_windows_strided(video, win, win)
}

/// Tiling with an explicit stride for denser scans.
pub fn tile_windows_strided<'a>(
    video: &'a VideoSequence,
    win: (usize, usize),
    stride: (usize, usize),
) -> Result<Vec<WindowSequence<'a>>> {
    let (wh, ww) = win;
    let (sh, sw) = stride;
    if wh == 0 || ww == 0 || sh == 0 || sw == 0 {
        return Err(Error::invalid("window and stride must be nonzero"));
    }
    if wh > video.height() || ww > video.width() {
        return Err(Error::invalid(format!(
            "window {}x{} larger than frame {}x{}",
            wh,
            ww,
            video.height(),
            video.width()
        )));
    }
    let rows = (video.height() - wh) / sh + 1;
    let cols = (video.width() - ww) / sw + 1;
    let mut out = Vec::with_capacity(rows * cols);
    for gy in 0..rows {
        for gx in 0..cols {
            out.push(WindowSequence {
                video,
                origin: (gx * sw, gy * sh),
                size: win,
            });
        }
    }
    Ok(out)
}

fn mean_var(values: impl Iterator<Item = f64> + Clone, count: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / count as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
    (mean, var)
}

fn stats_of_frames(frames: &[Frame]) -> SequenceStats {
    let mut window_means = Vec::with_capacity(frames.len());
    let mut window_vars = Vec::with_capacity(frames.len());
    for f in frames {
        let (mean, var) = mean_var(f.data().iter().copied(), f.data().len());
        window_means.push(mean);
        window_vars.push(var);
    }
    let n = frames.len();
    let (_, var_of_means) = mean_var(window_means.iter().copied(), n);
    let (_, var_of_vars) = mean_var(window_vars.iter().copied(), n);
    SequenceStats {
        window_means,
        window_vars,
        var_of_vars,
        var_of_means,
    }
}

/// Per-window mean/variance over all `c*h*w` samples, plus the variance of
/// those statistics over the n windows.
pub fn sequence_stats(ws: &WindowSequence<'_>) -> SequenceStats {
    let frames: Vec<Frame> = (0..ws.len()).map(|j| ws.window(j)).collect();
    stats_of_frames(&frames)
}

/// The acceptance predicate over one sequence's statistics.
pub fn accept_sequence(stats: &SequenceStats, thr: &NoiseThresholds) -> bool {
    stats.window_vars.iter().all(|&v| v < thr.sigma)
        && stats.window_means.iter().all(|&m| m > thr.mu)
        && stats.var_of_vars <= thr.sigma_var
        && stats.var_of_means <= thr.sigma_mean
}

/// Extraction options beyond the plain `(window, thresholds)` form.
#[derive(Debug, Clone)]
pub struct ExtractOptions {
    pub window: (usize, usize),
    pub stride: Option<(usize, usize)>,
    pub thresholds: NoiseThresholds,
    /// Store mean-subtracted residuals instead of raw windows.
    pub zero_mean: bool,
    /// Provenance id recorded per entry.
    pub source: String,
}

impl ExtractOptions {
    pub fn new(window: (usize, usize), thresholds: NoiseThresholds) -> Self {
        ExtractOptions {
            window,
            stride: None,
            thresholds,
            zero_mean: false,
            source: String::new(),
        }
    }
}

/// Scan, filter, and copy out every accepted window sequence.
pub fn extract_noise_bank(
    video: &VideoSequence,
    win: (usize, usize),
    thr: &NoiseThresholds,
) -> Result<NoiseBank> {
    extract_noise_bank_with(video, &ExtractOptions::new(win, *thr))
}

pub fn extract_noise_bank_with(video: &VideoSequence, opts: &ExtractOptions) -> Result<NoiseBank> {
    opts.thresholds.validate()?;
    let stride = opts.stride.unwrap_or(opts.window);
    let tiles = tile_windows_strided(video, opts.window, stride)?;
    let mut bank = NoiseBank::empty(video.len(), video.channels(), opts.window.0, opts.window.1);
    bank.meta.thresholds = opts.thresholds;
    bank.meta.zero_mean = opts.zero_mean;
    for ws in &tiles {
        // Statistics are taken at container precision so metadata matches
        // the stored bytes exactly.
        let mut frames: Vec<Frame> = (0..ws.len())
            .map(|j| ws.window(j).map(quantize_f32))
            .collect();
        let stats = stats_of_frames(&frames);
        if !accept_sequence(&stats, &opts.thresholds) {
            continue;
        }
        if opts.zero_mean {
            for (f, &m) in frames.iter_mut().zip(&stats.window_means) {
                *f = f.map(|v| quantize_f32(v - m));
            }
        }
        bank.push(BankEntry {
            noise: VideoSequence::new(frames)?,
            meta: EntryMeta {
                source: opts.source.clone(),
                origin: (ws.origin.0 as u32, ws.origin.1 as u32),
                window_means: stats.window_means,
                window_vars: stats.window_vars,
            },
        })?;
    }
    Ok(bank)
}
