//! Gaussian blur and geometric resampling.
//!
//! Conventions pinned for reproducibility: reflect (mirror-with-edge)
//! padding for the blur, half-pixel-centered coordinate mapping for all
//! resizes, Keys bicubic with a = -0.5, replicated borders for resampling
//! taps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;

/// Mirror an index into `[0, n)` with the edge sample repeated.
#[inline]
pub(crate) fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Normalized Gaussian taps with radius `ceil(3 sigma)`.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps = Vec::with_capacity((2 * radius + 1) as usize);
    let inv = 1.0 / (2.0 * sigma * sigma);
    for d in -radius..=radius {
        taps.push((-((d * d) as f64) * inv).exp());
    }
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

fn convolve_rows(frame: &Frame, taps: &[f64]) -> Frame {
    let (c, h, w) = frame.shape();
    let radius = (taps.len() / 2) as isize;
    Frame::from_fn(c, h, w, |ch, y, x| {
        let mut acc = 0.0;
        for (k, &t) in taps.iter().enumerate() {
            let xx = reflect(x as isize + k as isize - radius, w);
            acc += t * frame.get(ch, y, xx);
        }
        acc
    })
}

fn convolve_cols(frame: &Frame, taps: &[f64]) -> Frame {
    let (c, h, w) = frame.shape();
    let radius = (taps.len() / 2) as isize;
    Frame::from_fn(c, h, w, |ch, y, x| {
        let mut acc = 0.0;
        for (k, &t) in taps.iter().enumerate() {
            let yy = reflect(y as isize + k as isize - radius, h);
            acc += t * frame.get(ch, yy, x);
        }
        acc
    })
}

/// Separable isotropic Gaussian blur. `sigma == 0` is the bitwise identity.
pub fn gaussian_blur(frame: &Frame, sigma: f64) -> Result<Frame> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::invalid(format!("blur sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(frame.clone());
    }
    let taps = gaussian_kernel(sigma);
    Ok(convolve_cols(&convolve_rows(frame, &taps), &taps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizeMethod {
    Nearest,
    Bilinear,
    Bicubic,
}

impl ResizeMethod {
    pub const ALL: [ResizeMethod; 3] = [
        ResizeMethod::Nearest,
        ResizeMethod::Bilinear,
        ResizeMethod::Bicubic,
    ];
}

/// Keys cubic kernel with a = -0.5.
#[inline]
fn bicubic_weight(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * (x * x * x - 5.0 * x * x + 8.0 * x - 4.0)
    } else {
        0.0
    }
}

/// One-axis resample of a row-major plane laid out as `rows` slices of
/// length `len`, producing `out_len` samples per row. `axis_get` abstracts
/// over direction so rows and columns share the kernel code.
fn resample_axis(
    get: &dyn Fn(usize, usize) -> f64,
    rows: usize,
    in_len: usize,
    out_len: usize,
    method: ResizeMethod,
) -> Vec<f64> {
    let ratio = in_len as f64 / out_len as f64;
    let mut out = vec![0.0; rows * out_len];
    for r in 0..rows {
        for o in 0..out_len {
            let src = (o as f64 + 0.5) * ratio - 0.5;
            let v = match method {
                ResizeMethod::Nearest => {
                    let i = (src + 0.5).floor().clamp(0.0, (in_len - 1) as f64) as usize;
                    get(r, i)
                }
                ResizeMethod::Bilinear => {
                    let i0 = src.floor();
                    let t = src - i0;
                    let a = get(r, i0.clamp(0.0, (in_len - 1) as f64) as usize);
                    let b = get(r, (i0 + 1.0).clamp(0.0, (in_len - 1) as f64) as usize);
                    a * (1.0 - t) + b * t
                }
                ResizeMethod::Bicubic => {
                    let i0 = src.floor() as isize;
                    let mut acc = 0.0;
                    for k in -1..=2isize {
                        let idx = (i0 + k).clamp(0, in_len as isize - 1) as usize;
                        acc += bicubic_weight(src - (i0 + k) as f64) * get(r, idx);
                    }
                    acc
                }
            };
            out[r * out_len + o] = v;
        }
    }
    out
}

/// Resample to explicit output dimensions without clamping. The toy
/// restorer relies on this staying linear in the pixel values.
pub(crate) fn resample_unclamped(
    frame: &Frame,
    out_h: usize,
    out_w: usize,
    method: ResizeMethod,
) -> Frame {
    let (c, h, w) = frame.shape();
    let mut out = Frame::constant(c, out_h, out_w, 0.0);
    for ch in 0..c {
        let plane = frame.plane(ch);
        // Horizontal pass: h rows of length w -> out_w.
        let horiz = resample_axis(&|r, i| plane[r * w + i], h, w, out_w, method);
        // Vertical pass: out_w columns of length h -> out_h.
        let vert = resample_axis(&|col, i| horiz[i * out_w + col], out_w, h, out_h, method);
        let dst = out.plane_mut(ch);
        for y in 0..out_h {
            for x in 0..out_w {
                dst[y * out_w + x] = vert[x * out_h + y];
            }
        }
    }
    out
}

/// Resize by a scale ratio (output dims = round(dim * scale), minimum
/// checked). Output clamped to `[0, 1]`.
pub fn resize(frame: &Frame, scale: f64, method: ResizeMethod) -> Result<Frame> {
    if !scale.is_finite() || scale <= 0.0 {
        return Err(Error::invalid(format!("resize scale must be > 0, got {scale}")));
    }
    let out_h = (frame.height() as f64 * scale + 0.5).floor() as usize;
    let out_w = (frame.width() as f64 * scale + 0.5).floor() as usize;
    resize_to(frame, out_h, out_w, method)
}

/// Resize to explicit output dimensions. Output clamped to `[0, 1]`.
pub fn resize_to(frame: &Frame, out_h: usize, out_w: usize, method: ResizeMethod) -> Result<Frame> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("resize output dimensions must be >= 1"));
    }
    Ok(resample_unclamped(frame, out_h, out_w, method).clamped())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_preserves_constants() {
        let f = Frame::constant(3, 16, 16, 0.37);
        for &sigma in &[0.4, 1.0, 2.5] {
            let b = gaussian_blur(&f, sigma).unwrap();
            for &v in b.data() {
                assert!((v - 0.37).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn blur_sigma_zero_is_identity() {
        let f = Frame::from_fn(1, 8, 8, |_, y, x| ((y * 8 + x) as f64) / 63.0);
        let b = gaussian_blur(&f, 0.0).unwrap();
        assert_eq!(f, b);
        assert!(gaussian_blur(&f, -1.0).is_err());
    }

    /// Independent oracle: dense 2-D convolution with a directly evaluated
    /// Gaussian kernel and the same mirror convention.
    fn dense_blur_oracle(frame: &Frame, sigma: f64) -> Frame {
        let radius = (3.0 * sigma).ceil() as isize;
        let mut weights = Vec::new();
        let mut total = 0.0;
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let w = (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp();
                weights.push((dy, dx, w));
                total += w;
            }
        }
        let (c, h, w) = frame.shape();
        Frame::from_fn(c, h, w, |ch, y, x| {
            let mut acc = 0.0;
            for &(dy, dx, wt) in &weights {
                let yy = reflect(y as isize + dy, h);
                let xx = reflect(x as isize + dx, w);
                acc += wt * frame.get(ch, yy, xx);
            }
            acc / total
        })
    }

    #[test]
    fn blur_matches_dense_convolution_oracle() {
        let mut impulse = Frame::constant(1, 9, 9, 0.0);
        impulse.set(0, 4, 4, 1.0);
        let got = gaussian_blur(&impulse, 1.0).unwrap();
        let want = dense_blur_oracle(&impulse, 1.0);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        // And on a textured frame near the borders.
        let tex = Frame::from_fn(2, 11, 7, |c, y, x| ((c + 2 * y + 3 * x) % 13) as f64 / 12.0);
        let got = gaussian_blur(&tex, 1.7).unwrap();
        let want = dense_blur_oracle(&tex, 1.7);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn resize_preserves_constants() {
        let f = Frame::constant(3, 12, 12, 0.62);
        for method in ResizeMethod::ALL {
            for &scale in &[0.5, 1.5, 0.25] {
                let r = resize(&f, scale, method).unwrap();
                for &v in r.data() {
                    assert!((v - 0.62).abs() < 1e-9, "{method:?} {scale}");
                }
            }
        }
    }

    #[test]
    fn nearest_upsamples_single_pixel() {
        let f = Frame::new(1, 1, 1, vec![0.8]).unwrap();
        let r = resize(&f, 2.0, ResizeMethod::Nearest).unwrap();
        assert_eq!(r.shape(), (1, 2, 2));
        assert!(r.data().iter().all(|&v| v == 0.8));
    }

    #[test]
    fn zero_output_dim_is_rejected() {
        let f = Frame::constant(1, 8, 8, 0.5);
        assert!(resize(&f, 0.01, ResizeMethod::Bilinear).is_err());
        assert!(resize(&f, -1.0, ResizeMethod::Bilinear).is_err());
    }

    /// Independent oracle: direct 2-D kernel evaluation per output pixel
    /// (no separable passes).
    fn direct_resample_oracle(frame: &Frame, out_h: usize, out_w: usize, method: ResizeMethod) -> Frame {
        let (c, h, w) = frame.shape();
        let ry = h as f64 / out_h as f64;
        let rx = w as f64 / out_w as f64;
        Frame::from_fn(c, out_h, out_w, |ch, oy, ox| {
            let sy = (oy as f64 + 0.5) * ry - 0.5;
            let sx = (ox as f64 + 0.5) * rx - 0.5;
            let v = match method {
                ResizeMethod::Nearest => {
                    let iy = (sy + 0.5).floor().clamp(0.0, (h - 1) as f64) as usize;
                    let ix = (sx + 0.5).floor().clamp(0.0, (w - 1) as f64) as usize;
                    frame.get(ch, iy, ix)
                }
                ResizeMethod::Bilinear => {
                    let y0 = sy.floor();
                    let x0 = sx.floor();
                    let ty = sy - y0;
                    let tx = sx - x0;
                    let cl = |v: f64, n: usize| v.clamp(0.0, (n - 1) as f64) as usize;
                    let v00 = frame.get(ch, cl(y0, h), cl(x0, w));
                    let v01 = frame.get(ch, cl(y0, h), cl(x0 + 1.0, w));
                    let v10 = frame.get(ch, cl(y0 + 1.0, h), cl(x0, w));
                    let v11 = frame.get(ch, cl(y0 + 1.0, h), cl(x0 + 1.0, w));
                    v00 * (1.0 - ty) * (1.0 - tx)
                        + v01 * (1.0 - ty) * tx
                        + v10 * ty * (1.0 - tx)
                        + v11 * ty * tx
                }
                ResizeMethod::Bicubic => {
                    let y0 = sy.floor() as isize;
                    let x0 = sx.floor() as isize;
                    let mut acc = 0.0;
                    for ky in -1..=2isize {
                        for kx in -1..=2isize {
                            let wy = bicubic_weight(sy - (y0 + ky) as f64);
                            let wx = bicubic_weight(sx - (x0 + kx) as f64);
                            let iy = (y0 + ky).clamp(0, h as isize - 1) as usize;
                            let ix = (x0 + kx).clamp(0, w as isize - 1) as usize;
                            acc += wy * wx * frame.get(ch, iy, ix);
                        }
                    }
                    acc
                }
            };
            v.clamp(0.0, 1.0)
        })
    }

    #[test]
    fn resize_matches_direct_oracle() {
        let ramp = Frame::from_fn(1, 8, 8, |_, y, x| (y as f64 * 8.0 + x as f64) / 63.0);
        for method in ResizeMethod::ALL {
            let got = resize(&ramp, 0.5, method).unwrap();
            let want = direct_resample_oracle(&ramp, 4, 4, method);
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-5, "{method:?}");
            }
        }
        // Upscale path, non-square source.
        let tex = Frame::from_fn(3, 6, 10, |c, y, x| ((c * 7 + y * 3 + x * 5) % 11) as f64 / 10.0);
        for method in ResizeMethod::ALL {
            let got = resize(&tex, 1.5, method).unwrap();
            let want = direct_resample_oracle(&tex, 9, 15, method);
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-5, "{method:?}");
            }
        }
    }
}
