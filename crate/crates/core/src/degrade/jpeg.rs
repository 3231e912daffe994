//! JPEG artifact simulation: blockwise DCT quantization without entropy
//! coding (the lossless half of the codec contributes nothing to the
//! degradation signal).
//!
//! RGB frames pass through full-range BT.601 YCbCr; gray frames use the
//! luma path directly. Each 8x8 block is transformed with the orthonormal
//! DCT-II, divided by the standard luma/chroma tables scaled by the usual
//! quality curve, rounded, and inverted. Edge blocks replicate their last
//! row/column.

use crate::error::{Error, Result};
use crate::frame::Frame;

#[rustfmt::skip]
const LUMA_TABLE: [i64; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
];

#[rustfmt::skip]
const CHROMA_TABLE: [i64; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// Scale a base table by the libjpeg quality curve.
fn scaled_table(base: &[i64; 64], quality: u8) -> [f64; 64] {
    let q = i64::from(quality);
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0.0; 64];
    for (o, &b) in out.iter_mut().zip(base) {
        *o = ((b * scale + 50) / 100).clamp(1, 255) as f64;
    }
    out
}

/// Orthonormal DCT-II basis, `basis[u][x] = alpha(u) cos((2x+1)u pi / 16)`.
fn dct_basis() -> [[f64; 8]; 8] {
    let mut basis = [[0.0; 8]; 8];
    for (u, row) in basis.iter_mut().enumerate() {
        let alpha = if u == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
        for (x, b) in row.iter_mut().enumerate() {
            *b = alpha * ((2.0 * x as f64 + 1.0) * u as f64 * std::f64::consts::PI / 16.0).cos();
        }
    }
    basis
}

/// Forward DCT, quantize, dequantize, inverse DCT on one 8x8 block of
/// level-shifted samples.
fn quantize_block(block: &mut [[f64; 8]; 8], table: &[f64; 64], basis: &[[f64; 8]; 8]) {
    let mut coeff = [[0.0; 8]; 8];
    for u in 0..8 {
        for v in 0..8 {
            let mut acc = 0.0;
            for (y, row) in block.iter().enumerate() {
                for (x, &val) in row.iter().enumerate() {
                    acc += basis[u][y] * basis[v][x] * val;
                }
            }
            let q = table[u * 8 + v];
            coeff[u][v] = (acc / q).round() * q;
        }
    }
    for (y, row) in block.iter_mut().enumerate() {
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (u, crow) in coeff.iter().enumerate() {
                for (v, &cv) in crow.iter().enumerate() {
                    acc += basis[u][y] * basis[v][x] * cv;
                }
            }
            *out = acc;
        }
    }
}

/// Quantize one plane of values in the 0..255 domain, in place.
fn quantize_plane(plane: &mut [f64], h: usize, w: usize, table: &[f64; 64], basis: &[[f64; 8]; 8]) {
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            let mut block = [[0.0; 8]; 8];
            for (y, row) in block.iter_mut().enumerate() {
                // Replicate the last row/column into partial edge blocks.
                let sy = (by + y).min(h - 1);
                for (x, val) in row.iter_mut().enumerate() {
                    let sx = (bx + x).min(w - 1);
                    *val = plane[sy * w + sx] - 128.0;
                }
            }
            quantize_block(&mut block, table, basis);
            for (y, row) in block.iter().enumerate() {
                if by + y >= h {
                    break;
                }
                for (x, &val) in row.iter().enumerate() {
                    if bx + x >= w {
                        break;
                    }
                    plane[(by + y) * w + bx + x] = val + 128.0;
                }
            }
        }
    }
}

/// Simulate JPEG compression artifacts at the given quality (1..=100).
pub fn jpeg_simulate(frame: &Frame, quality: u8) -> Result<Frame> {
    if !(1..=100).contains(&quality) {
        return Err(Error::invalid(format!(
            "jpeg quality must be in 1..=100, got {quality}"
        )));
    }
    let (c, h, w) = frame.shape();
    let basis = dct_basis();
    let luma = scaled_table(&LUMA_TABLE, quality);
    let chroma = scaled_table(&CHROMA_TABLE, quality);
    match c {
        1 => {
            let mut plane: Vec<f64> = frame.data().iter().map(|&v| v * 255.0).collect();
            quantize_plane(&mut plane, h, w, &luma, &basis);
            let data = plane.iter().map(|&v| (v / 255.0).clamp(0.0, 1.0)).collect();
            Frame::new(1, h, w, data)
        }
        3 => {
            let pixels = h * w;
            let (r, gb) = frame.data().split_at(pixels);
            let (g, b) = gb.split_at(pixels);
            let mut y_p = vec![0.0; pixels];
            let mut cb_p = vec![0.0; pixels];
            let mut cr_p = vec![0.0; pixels];
            for i in 0..pixels {
                let (rv, gv, bv) = (r[i] * 255.0, g[i] * 255.0, b[i] * 255.0);
                y_p[i] = 0.299 * rv + 0.587 * gv + 0.114 * bv;
                cb_p[i] = -0.168736 * rv - 0.331264 * gv + 0.5 * bv + 128.0;
                cr_p[i] = 0.5 * rv - 0.418688 * gv - 0.081312 * bv + 128.0;
            }
            quantize_plane(&mut y_p, h, w, &luma, &basis);
            quantize_plane(&mut cb_p, h, w, &chroma, &basis);
            quantize_plane(&mut cr_p, h, w, &chroma, &basis);
            let mut data = vec![0.0; 3 * pixels];
            for i in 0..pixels {
                let (yv, cbv, crv) = (y_p[i], cb_p[i] - 128.0, cr_p[i] - 128.0);
                data[i] = ((yv + 1.402 * crv) / 255.0).clamp(0.0, 1.0);
                data[pixels + i] =
                    ((yv - 0.344136 * cbv - 0.714136 * crv) / 255.0).clamp(0.0, 1.0);
                data[2 * pixels + i] = ((yv + 1.772 * cbv) / 255.0).clamp(0.0, 1.0);
            }
            Frame::new(3, h, w, data)
        }
        c => Err(Error::invalid(format!(
            "jpeg simulation supports gray or rgb frames, got {c} channels"
        ))),
    }
}
