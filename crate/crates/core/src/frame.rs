//! Planar pixel tensors: the universal carrier for frames and clips.
//!
//! A [`Frame`] stores `channels` planes of `height x width` samples in
//! row-major order, normalized to `[0, 1]` (8-bit sources divide by 255,
//! 16-bit by 65535). A [`VideoSequence`] is a non-empty list of frames
//! sharing one shape. Values are `f64`; operations that promise clamped
//! output do the clamping themselves, which lets linear stages (the toy
//! restorer) stay clamp-free.

use crate::error::{Error, Result};

/// A single image: `channels` planes, each `height x width`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Frame {
    /// Construct from raw planar data. Length must equal `c * h * w`.
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::invalid("frame dimensions must be nonzero"));
        }
        if data.len() != channels * height * width {
            return Err(Error::invalid(format!(
                "frame data length {} does not match {}x{}x{}",
                data.len(),
                channels,
                height,
                width
            )));
        }
        Ok(Frame {
            channels,
            height,
            width,
            data,
        })
    }

    /// A frame filled with one value.
    pub fn constant(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Frame {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    /// Build per-sample from a function of (channel, y, x).
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Frame {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f64) {
        self.data[(c * self.height + y) * self.width + x] = value;
    }

    /// One channel plane as a slice of `height * width` samples.
    pub fn plane(&self, c: usize) -> &[f64] {
        let len = self.height * self.width;
        &self.data[c * len..(c + 1) * len]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let len = self.height * self.width;
        &mut self.data[c * len..(c + 1) * len]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Elementwise map into a new frame of the same shape.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Frame {
        Frame {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Clamp every sample into `[0, 1]`.
    pub fn clamped(&self) -> Frame {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Copy a rectangular region (all channels) into a new frame.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Frame> {
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::invalid(format!(
                "crop {}x{}+{}+{} exceeds frame {}x{}",
                h, w, x0, y0, self.width, self.height
            )));
        }
        let mut out = Frame::constant(self.channels, h, w, 0.0);
        for c in 0..self.channels {
            for y in 0..h {
                for x in 0..w {
                    out.set(c, y, x, self.get(c, y0 + y, x0 + x));
                }
            }
        }
        Ok(out)
    }

    /// Write a frame-shaped patch back at (y0, x0).
    pub fn blit(&mut self, patch: &Frame, y0: usize, x0: usize) -> Result<()> {
        if patch.channels != self.channels
            || y0 + patch.height > self.height
            || x0 + patch.width > self.width
        {
            return Err(Error::invalid("blit region exceeds frame bounds"));
        }
        for c in 0..self.channels {
            for y in 0..patch.height {
                for x in 0..patch.width {
                    self.set(c, y0 + y, x0 + x, patch.get(c, y, x));
                }
            }
        }
        Ok(())
    }
}

/// An ordered, shape-homogeneous list of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    frames: Vec<Frame>,
}

impl VideoSequence {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::invalid("video sequence needs at least one frame"))?;
        let shape = first.shape();
        if frames.iter().any(|f| f.shape() != shape) {
            return Err(Error::invalid("all frames in a sequence must share one shape"));
        }
        Ok(VideoSequence { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: n >= 1
    }

    pub fn channels(&self) -> usize {
        self.frames[0].channels()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    /// (n, c, h, w)
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        let (c, h, w) = self.frames[0].shape();
        (self.frames.len(), c, h, w)
    }

    pub fn frame(&self, i: usize) -> &Frame {
        &self.frames[i]
    }

    pub fn frame_mut(&mut self, i: usize) -> &mut Frame {
        &mut self.frames[i]
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Frame> {
        self.frames.iter()
    }

    /// Apply a frame transform to every frame.
    pub fn map_frames(&self, mut f: impl FnMut(&Frame) -> Result<Frame>) -> Result<VideoSequence> {
        let mut frames = Vec::with_capacity(self.frames.len());
        for frame in &self.frames {
            frames.push(f(frame)?);
        }
        VideoSequence::new(frames)
    }

    /// Total sample count `n * c * h * w`.
    pub fn element_count(&self) -> usize {
        let (n, c, h, w) = self.shape();
        n * c * h * w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_indexing_is_planar_row_major() {
        let f = Frame::from_fn(2, 3, 4, |c, y, x| (c * 100 + y * 10 + x) as f64);
        assert_eq!(f.get(0, 0, 0), 0.0);
        assert_eq!(f.get(0, 2, 3), 23.0);
        assert_eq!(f.get(1, 1, 2), 112.0);
        assert_eq!(f.data()[1 * 12 + 1 * 4 + 2], 112.0);
    }

    #[test]
    fn frame_rejects_bad_length() {
        assert!(Frame::new(1, 2, 2, vec![0.0; 3]).is_err());
        assert!(Frame::new(0, 2, 2, vec![]).is_err());
    }

    #[test]
    fn sequence_rejects_mixed_shapes() {
        let a = Frame::constant(1, 4, 4, 0.0);
        let b = Frame::constant(1, 2, 2, 0.0);
        assert!(VideoSequence::new(vec![a.clone(), b]).is_err());
        assert!(VideoSequence::new(vec![]).is_err());
        assert!(VideoSequence::new(vec![a]).is_ok());
    }

    #[test]
    fn crop_and_blit_roundtrip() {
        let f = Frame::from_fn(1, 6, 6, |_, y, x| (y * 6 + x) as f64 / 36.0);
        let patch = f.crop(2, 3, 2, 2).unwrap();
        assert_eq!(patch.get(0, 0, 0), f.get(0, 2, 3));
        let mut g = Frame::constant(1, 6, 6, 0.0);
        g.blit(&patch, 2, 3).unwrap();
        assert_eq!(g.get(0, 3, 4), f.get(0, 3, 4));
        assert_eq!(g.get(0, 0, 0), 0.0);
    }
}
