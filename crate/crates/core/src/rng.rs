//! Counter-derived deterministic randomness.
//!
//! Every random decision in the pipeline flows from a `(seed, tags)` pair:
//! the tags name a lane (purpose string, video id, frame index, patch
//! index), the seed and a stable hash of the tags are avalanched through
//! the SplitMix64 finalizer into a generator state, and draws come from a
//! 64-bit xorshift-multiply generator. Identical `(seed, tags)` always
//! replays the identical draw sequence, on any platform, in any evaluation
//! order. No operation reads ambient state.
//!
//! Streams can also derive children from their *origin* state (not the
//! current position), so per-frame / per-patch lanes are independent of
//! how many draws their parent has made.

use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;
const GOLDEN: u64 = 0x9e3779b97f4a7c15;

/// SplitMix64 finalizer: full-avalanche 64-bit mix.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Lane identifier for a derived stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamTags<'a> {
    pub purpose: &'a str,
    pub video: u64,
    pub frame: u64,
    pub patch: u64,
}

impl<'a> StreamTags<'a> {
    pub fn new(purpose: &'a str, video: u64, frame: u64, patch: u64) -> Self {
        StreamTags {
            purpose,
            video,
            frame,
            patch,
        }
    }

    /// Stable 64-bit hash: FNV-1a over the purpose bytes, then each index
    /// folded in through the avalanche mix. Independent of platform.
    fn stable_hash(&self) -> u64 {
        let mut h = FNV_OFFSET;
        for b in self.purpose.bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(FNV_PRIME);
        }
        h = mix64(h ^ self.video.wrapping_mul(GOLDEN));
        h = mix64(h ^ self.frame.wrapping_mul(GOLDEN));
        h = mix64(h ^ self.patch.wrapping_mul(GOLDEN));
        h
    }
}

/// A deterministic draw stream. Cheap to copy; copying forks the position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    state: u64,
    origin: u64,
}

/// Derive a stream from a seed and lane tags. Pure function: the same
/// inputs yield the same stream regardless of call order.
pub fn derive_stream(seed: u64, tags: &StreamTags<'_>) -> RngStream {
    RngStream::from_raw(mix64(mix64(seed ^ GOLDEN) ^ tags.stable_hash()))
}

impl RngStream {
    fn from_raw(state: u64) -> Self {
        // xorshift64 has a single absorbing zero state.
        let state = if state == 0 { GOLDEN } else { state };
        RngStream {
            state,
            origin: state,
        }
    }

    /// Derive an independent child lane from this stream's origin. The
    /// result does not depend on how many draws the parent has made.
    pub fn child(&self, lane: u64) -> RngStream {
        RngStream::from_raw(mix64(self.origin ^ lane.wrapping_mul(GOLDEN) ^ 0x5bf0_3635))
    }

    /// xorshift64 step followed by the odd-constant multiply (xorshift*).
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545f4914f6cdd1d)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform index in `[0, k)` via the fixed-point multiply reduction
    /// `(x * k) >> 64` (bias below 2^-53 for any k this crate uses).
    pub fn next_choice(&mut self, k: usize) -> Result<usize> {
        if k == 0 {
            return Err(Error::invalid("next_choice requires k >= 1"));
        }
        let x = self.next_u64();
        Ok(((u128::from(x) * k as u128) >> 64) as usize)
    }

    /// Uniform draw in `[lo, hi]`.
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_uniform()
    }

    /// Standard normal via Box-Muller. Consumes exactly two uniforms.
    pub fn next_gaussian(&mut self) -> f64 {
        // 1 - u lies in (0, 1], keeping the log finite.
        let r = (-2.0 * (1.0 - self.next_uniform()).ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * self.next_uniform();
        r * theta.cos()
    }

    /// Poisson draw. Knuth's product method for small means; for means
    /// beyond 500 a rounded normal approximation keeps the draw O(1).
    pub fn next_poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        if mean > 500.0 {
            let v = mean + mean.sqrt() * self.next_gaussian();
            return v.round().max(0.0) as u64;
        }
        let limit = (-mean).exp();
        let mut k = 0u64;
        let mut p = 1.0;
        loop {
            p *= self.next_uniform();
            if p <= limit {
                return k;
            }
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(purpose: &str, v: u64, f: u64, p: u64) -> StreamTags<'_> {
        StreamTags::new(purpose, v, f, p)
    }

    #[test]
    fn same_seed_and_tags_replay_identically() {
        let a = derive_stream(42, &tags("mix", 0, 0, 0));
        let b = derive_stream(42, &tags("mix", 0, 0, 0));
        assert_eq!(a, b);
        let (mut a, mut b) = (a, b);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_tags_diverge_within_64_draws() {
        let mut a = derive_stream(42, &tags("mix", 0, 0, 0));
        let mut b = derive_stream(42, &tags("mix", 0, 0, 1));
        let mut c = derive_stream(42, &tags("rot", 0, 0, 0));
        let av: Vec<u64> = (0..64).map(|_| a.next_u64()).collect();
        let bv: Vec<u64> = (0..64).map(|_| b.next_u64()).collect();
        let cv: Vec<u64> = (0..64).map(|_| c.next_u64()).collect();
        assert_ne!(av, bv);
        assert_ne!(av, cv);
    }

    #[test]
    fn different_seeds_differ_in_first_draw() {
        let mut a = derive_stream(41, &tags("mix", 1, 2, 3));
        let mut b = derive_stream(42, &tags("mix", 1, 2, 3));
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn uniform_draws_stay_in_unit_interval_and_center() {
        let mut s = derive_stream(7, &tags("uniform", 0, 0, 0));
        let n = 1_000_000usize;
        let mut sum = 0.0;
        for _ in 0..n {
            let u = s.next_uniform();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        let mean = sum / n as f64;
        assert!((0.499..=0.501).contains(&mean), "mean {mean}");
    }

    #[test]
    fn choice_is_uniform_over_four() {
        let mut s = derive_stream(11, &tags("choice", 0, 0, 0));
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[s.next_choice(4).unwrap()] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((0.24..=0.26).contains(&f), "freq {f}");
        }
    }

    #[test]
    fn choice_edge_cases() {
        let mut s = derive_stream(1, &tags("edge", 0, 0, 0));
        assert_eq!(s.next_choice(1).unwrap(), 0);
        assert!(s.next_choice(0).is_err());
        let mut a = derive_stream(5, &tags("edge", 0, 0, 0));
        let mut b = derive_stream(5, &tags("edge", 0, 0, 0));
        assert_eq!(a.next_choice(10).unwrap(), b.next_choice(10).unwrap());
    }

    #[test]
    fn children_are_order_independent() {
        let parent = derive_stream(99, &tags("parent", 3, 0, 0));
        let mut exhausted = parent;
        for _ in 0..1000 {
            exhausted.next_u64();
        }
        // Child lanes depend on the origin, not the parent's position.
        let mut c1 = parent.child(7);
        let mut c2 = exhausted.child(7);
        assert_eq!(c1.next_u64(), c2.next_u64());
        // Sibling lanes differ.
        let mut c3 = parent.child(8);
        assert_ne!(parent.child(7).next_u64(), c3.next_u64());
    }

    #[test]
    fn gaussian_moments_are_sane() {
        let mut s = derive_stream(3, &tags("gauss", 0, 0, 0));
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z = s.next_gaussian();
            sum += z;
            sum_sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn poisson_mean_tracks_parameter() {
        let mut s = derive_stream(4, &tags("poisson", 0, 0, 0));
        for &mean in &[0.5, 4.0, 60.0] {
            let n = 50_000;
            let total: u64 = (0..n).map(|_| s.next_poisson(mean)).sum();
            let got = total as f64 / n as f64;
            assert!(
                (got - mean).abs() < 0.05 * mean.max(1.0),
                "mean {mean} got {got}"
            );
        }
        assert_eq!(s.next_poisson(0.0), 0);
    }
}
