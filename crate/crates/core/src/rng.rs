//! Seeded random streams.
//!
//! All randomness is derived from a `(seed, stream)` pair so that independent
//! tasks (device x channel x frame) draw from non-overlapping ChaCha streams
//! and any result can be regenerated in isolation.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Real;

pub type StreamRng = ChaCha8Rng;

/// Independent generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a tag path (e.g. `[device, channel, frame]`) into a stream id.
pub fn stream_id(tags: &[u64]) -> u64 {
    // splitmix64 finaliser applied to a running fold
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &t in tags {
        h ^= t
            .wrapping_add(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(h << 6)
            .wrapping_add(h >> 2);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

/// Circularly-symmetric complex Gaussian sample with `E|n|^2 = power`.
pub fn complex_gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R, power: f64) -> Complex<T> {
    let sigma = (power / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(T::lit(sigma * re), T::lit(sigma * im))
}

/// Converts a power in dB to a linear ratio; `-inf` maps to zero.
pub fn db_to_power(db: f64) -> f64 {
    if db == f64::NEG_INFINITY {
        0.0
    } else {
        10f64.powf(db / 10.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream_rng(7, 1).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        assert_ne!(stream_rng(7, 1).next_u64(), stream_rng(7, 2).next_u64());
        assert_ne!(stream_id(&[1, 2]), stream_id(&[2, 1]));
    }

    #[test]
    fn gaussian_power() {
        let mut rng = stream_rng(3, 0);
        let n = 200_000;
        let p: f64 = (0..n)
            .map(|_| complex_gaussian::<f64, _>(&mut rng, 0.5).norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((p - 0.5).abs() < 0.01, "{p}");
    }
}
