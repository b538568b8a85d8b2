//! Seeded random streams.
//!
//! Every stochastic step derives its generator from a master seed plus a
//! stream index, so independent jobs can run in any order (or in parallel)
//! and still draw the same numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a stream label.
#[inline]
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn stream(seed: u64, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}

/// Two-level stream, e.g. (job, replicate).
pub fn stream2(seed: u64, a: u64, b: u64) -> StreamRng {
    stream(derive_seed(seed, a), b)
}

/// Standard normal draw by Box-Muller.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        if u1 <= f64::MIN_POSITIVE {
            continue;
        }
        let u2: f64 = rng.gen();
        return libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2);
    }
}

/// Poisson draw by inversion; fine for the small means used here.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let l = libm::exp(-mean);
    let mut k = 0u32;
    let mut p = 1.0;
    loop {
        p *= rng.gen::<f64>();
        if p <= l {
            return k;
        }
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream(7, 1).gen()).collect();
        let b: Vec<u64> = (0..4).map(|_| stream(7, 1).gen()).collect();
        assert_eq!(a, b);
        let x: u64 = stream(7, 1).gen();
        let y: u64 = stream(7, 2).gen();
        assert_ne!(x, y);
    }

    #[test]
    fn normal_moments() {
        let mut rng = stream(3, 0);
        let xs: Vec<f64> = (0..20_000).map(|_| standard_normal(&mut rng)).collect();
        let m = crate::math::mean(&xs);
        let sd = crate::math::sample_sd(&xs);
        assert!(m.abs() < 0.03, "mean {m}");
        assert!((sd - 1.0).abs() < 0.03, "sd {sd}");
    }

    #[test]
    fn poisson_mean() {
        let mut rng = stream(5, 0);
        let total: u32 = (0..20_000).map(|_| poisson(&mut rng, 0.67)).sum();
        let m = total as f64 / 20_000.0;
        assert!((m - 0.67).abs() < 0.03, "mean {m}");
    }
}
