//! Deterministic seed derivation.
//!
//! Every random draw in the pipeline flows from a single base seed through
//! this mixer, so reruns with the same configuration reproduce every file,
//! segment offset, and weight initialization byte for byte.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates nearby inputs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a base seed and a context path.
///
/// The same `(base, path)` pair always yields the same seed; distinct paths
/// yield uncorrelated streams.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut state = mix(base);
    for &part in path {
        state = mix(state ^ mix(part));
    }
    state
}

/// Seeded generator used throughout the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_deterministic() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
    }

    #[test]
    fn distinct_paths_differ() {
        let a = derive_seed(7, &[1, 2]);
        let b = derive_seed(7, &[2, 1]);
        let c = derive_seed(8, &[1, 2]);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn empty_path_differs_from_base() {
        assert_ne!(derive_seed(7, &[]), 7);
    }
}
