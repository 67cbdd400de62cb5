//! Deterministic seed derivation. Every source of randomness in the crate is
//! a ChaCha stream seeded through these helpers, so a root seed reproduces an
//! entire run bit-for-bit and parallel workers get independent streams that do
//! not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes `(root, index)` into a child seed. Children of distinct indices (or
/// distinct roots) are decorrelated streams.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    mix(mix(root) ^ index.wrapping_mul(0xA24B_AED4_963E_E407))
}

/// Fresh deterministic generator for a derived stream.
pub fn stream(root: u64, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(root, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_distinct() {
        assert_eq!(derive_seed(1, 2), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 2), derive_seed(1, 3));
        assert_ne!(derive_seed(1, 2), derive_seed(2, 2));
    }

    #[test]
    fn streams_reproduce() {
        use rand::Rng;
        let mut r1 = stream(9, 0);
        let mut r2 = stream(9, 0);
        let a: Vec<u64> = (0..4).map(|_| r1.random()).collect();
        let b: Vec<u64> = (0..4).map(|_| r2.random()).collect();
        assert_eq!(a, b);
        let mut r3 = stream(9, 1);
        assert_ne!(a[0], r3.random::<u64>());
    }
}
