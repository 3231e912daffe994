//! Plane-level linear operators with exact adjoints.
//!
//! Forward application and adjoint (transpose) share one tap enumeration,
//! so `<A x, g> == <x, A' g>` holds to rounding error by construction.
//! The analytic gradients in the restorer lean on this: a hand-written
//! transpose that drifted from the forward pass would silently fail the
//! finite-difference checks.

use crate::degrade::reflect;

/// Sparse convolution taps: (dy, dx, weight), reflect-padded, same-size.
#[derive(Debug, Clone)]
pub(crate) struct ConvTaps {
    pub taps: Vec<(isize, isize, f64)>,
}

impl ConvTaps {
    /// Row-major 3x3 kernel.
    pub fn conv3x3(kernel: &[f64]) -> ConvTaps {
        debug_assert_eq!(kernel.len(), 9);
        let taps = OFFSETS_3X3
            .iter()
            .zip(kernel)
            .map(|(&(dy, dx), &w)| (dy, dx, w))
            .collect();
        ConvTaps { taps }
    }

    /// Outer product of the normalized 1-D Gaussian taps.
    pub fn gaussian(sigma: f64) -> ConvTaps {
        let k = crate::degrade::gaussian_kernel_taps(sigma);
        let radius = (k.len() / 2) as isize;
        let mut taps = Vec::with_capacity(k.len() * k.len());
        for (i, &wy) in k.iter().enumerate() {
            for (j, &wx) in k.iter().enumerate() {
                taps.push((i as isize - radius, j as isize - radius, wy * wx));
            }
        }
        ConvTaps { taps }
    }

    /// 3x3 Laplacian (4-neighbor).
    pub fn laplacian() -> ConvTaps {
        ConvTaps::conv3x3(&[0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0])
    }
}

pub(crate) const OFFSETS_3X3: [(isize, isize); 9] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 0),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

pub(crate) fn conv_apply(c: &ConvTaps, src: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for &(dy, dx, wt) in &c.taps {
                acc += wt * src[reflect(y as isize + dy, h) * w + reflect(x as isize + dx, w)];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

pub(crate) fn conv_adjoint(c: &ConvTaps, grad: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let g = grad[y * w + x];
            for &(dy, dx, wt) in &c.taps {
                out[reflect(y as isize + dy, h) * w + reflect(x as isize + dx, w)] += wt * g;
            }
        }
    }
    out
}

/// d(conv output)/d(kernel weight) accumulated against a cotangent:
/// returns the 9 per-tap gradients for a 3x3 reflect convolution.
pub(crate) fn conv3x3_param_grad(src: &[f64], grad: &[f64], h: usize, w: usize) -> [f64; 9] {
    let mut out = [0.0; 9];
    for y in 0..h {
        for x in 0..w {
            let g = grad[y * w + x];
            for (t, &(dy, dx)) in OFFSETS_3X3.iter().enumerate() {
                out[t] += g * src[reflect(y as isize + dy, h) * w + reflect(x as isize + dx, w)];
            }
        }
    }
    out
}

/// Forward horizontal difference; the last column is zero.
pub(crate) fn grad_x_apply(src: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w - 1 {
            out[y * w + x] = src[y * w + x + 1] - src[y * w + x];
        }
    }
    out
}

pub(crate) fn grad_x_adjoint(grad: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w - 1 {
            let g = grad[y * w + x];
            out[y * w + x + 1] += g;
            out[y * w + x] -= g;
        }
    }
    out
}

/// Forward vertical difference; the last row is zero.
pub(crate) fn grad_y_apply(src: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h - 1 {
        for x in 0..w {
            out[y * w + x] = src[(y + 1) * w + x] - src[y * w + x];
        }
    }
    out
}

pub(crate) fn grad_y_adjoint(grad: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h - 1 {
        for x in 0..w {
            let g = grad[y * w + x];
            out[(y + 1) * w + x] += g;
            out[y * w + x] -= g;
        }
    }
    out
}

/// Bilinear x4 upsample taps at (oy, ox): up to four (iy, ix, weight).
#[inline]
fn up4_taps(oy: usize, ox: usize, h: usize, w: usize, mut sink: impl FnMut(usize, usize, f64)) {
    let sy = (oy as f64 + 0.5) / 4.0 - 0.5;
    let sx = (ox as f64 + 0.5) / 4.0 - 0.5;
    let y0 = sy.floor();
    let x0 = sx.floor();
    let ty = sy - y0;
    let tx = sx - x0;
    let cl = |v: f64, n: usize| v.clamp(0.0, (n - 1) as f64) as usize;
    sink(cl(y0, h), cl(x0, w), (1.0 - ty) * (1.0 - tx));
    sink(cl(y0, h), cl(x0 + 1.0, w), (1.0 - ty) * tx);
    sink(cl(y0 + 1.0, h), cl(x0, w), ty * (1.0 - tx));
    sink(cl(y0 + 1.0, h), cl(x0 + 1.0, w), ty * tx);
}

/// Half-pixel-centered bilinear x4 upsample, unclamped.
pub(crate) fn up4_apply(src: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (4 * h, 4 * w);
    let mut out = vec![0.0; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = 0.0;
            up4_taps(oy, ox, h, w, |iy, ix, wt| acc += wt * src[iy * w + ix]);
            out[oy * ow + ox] = acc;
        }
    }
    out
}

pub(crate) fn up4_adjoint(grad: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (4 * h, 4 * w);
    let mut out = vec![0.0; h * w];
    for oy in 0..oh {
        for ox in 0..ow {
            let g = grad[oy * ow + ox];
            up4_taps(oy, ox, h, w, |iy, ix, wt| out[iy * w + ix] += wt * g);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, StreamTags};

    fn random_plane(h: usize, w: usize, seed: u64) -> Vec<f64> {
        let mut s = derive_stream(seed, &StreamTags::new("filters-test", 0, 0, 0));
        (0..h * w).map(|_| s.next_uniform() - 0.5).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// <A x, g> == <x, A' g> for every exported operator.
    #[test]
    fn adjoints_match_forward_operators() {
        let (h, w) = (9, 7);
        let x = random_plane(h, w, 1);
        let cases: Vec<(Vec<f64>, Vec<f64>, &str)> = vec![
            {
                let taps = ConvTaps::gaussian(1.0);
                let g = random_plane(h, w, 2);
                (
                    vec![dot(&conv_apply(&taps, &x, h, w), &g)],
                    vec![dot(&x, &conv_adjoint(&taps, &g, h, w))],
                    "gaussian",
                )
            },
            {
                let taps = ConvTaps::laplacian();
                let g = random_plane(h, w, 3);
                (
                    vec![dot(&conv_apply(&taps, &x, h, w), &g)],
                    vec![dot(&x, &conv_adjoint(&taps, &g, h, w))],
                    "laplacian",
                )
            },
            {
                let g = random_plane(h, w, 4);
                (
                    vec![dot(&grad_x_apply(&x, h, w), &g)],
                    vec![dot(&x, &grad_x_adjoint(&g, h, w))],
                    "grad_x",
                )
            },
            {
                let g = random_plane(h, w, 5);
                (
                    vec![dot(&grad_y_apply(&x, h, w), &g)],
                    vec![dot(&x, &grad_y_adjoint(&g, h, w))],
                    "grad_y",
                )
            },
            {
                let g = random_plane(4 * h, 4 * w, 6);
                (
                    vec![dot(&up4_apply(&x, h, w), &g)],
                    vec![dot(&x, &up4_adjoint(&g, h, w))],
                    "up4",
                )
            },
        ];
        for (lhs, rhs, name) in cases {
            assert!((lhs[0] - rhs[0]).abs() < 1e-10, "{name}: {} vs {}", lhs[0], rhs[0]);
        }
    }

    #[test]
    fn laplacian_kills_constants() {
        let x = vec![0.37; 8 * 8];
        let out = conv_apply(&ConvTaps::laplacian(), &x, 8, 8);
        assert!(out.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn gradients_kill_constants() {
        let x = vec![0.9; 6 * 5];
        assert!(grad_x_apply(&x, 6, 5).iter().all(|&v| v == 0.0));
        assert!(grad_y_apply(&x, 6, 5).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn up4_interpolates_constants_exactly() {
        let x = vec![0.25; 4 * 4];
        let out = up4_apply(&x, 4, 4);
        assert_eq!(out.len(), 16 * 16);
        assert!(out.iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }
}
