//! Deterministic seed derivation.
//!
//! Random streams are keyed by the values that identify a unit of work
//! (run seed, iteration, pixel, frame) rather than by execution order, so
//! parallel scheduling never changes a result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a list of keys into a single 64-bit seed.
pub fn mix(keys: &[u64]) -> u64 {
    keys.iter()
        .fold(0x2545_F491_4F6C_DD1D, |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Seed for the sampling stream of one ray.
pub fn ray_seed(seed: u64, pixel: (f64, f64), t: u32) -> u64 {
    mix(&[seed, pixel.0.to_bits(), pixel.1.to_bits(), t as u64])
}

pub fn rng(keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(keys))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_is_order_sensitive() {
        assert_ne!(mix(&[1, 2]), mix(&[2, 1]));
        assert_eq!(mix(&[7, 9, 11]), mix(&[7, 9, 11]));
    }
}
