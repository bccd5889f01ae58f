//! Deterministic seed derivation.
//!
//! Every random stream in this crate is keyed by a base seed plus a purpose
//! tag (and optionally an index such as a fold number or subject index).
//! Derivation is a fixed integer mix with no dependence on time, environment,
//! or thread schedule, so independently derived streams are reproducible and
//! insensitive to the order in which work is executed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One round of the splitmix64 output function.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` for the stream named by `tag` and
/// distinguished by `index`.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut h = mix(base ^ 0x6a09_e667_f3bc_c908);
    for chunk in tag.as_bytes().chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        h = mix(h ^ u64::from_le_bytes(word));
    }
    mix(h ^ index)
}

/// A seeded random generator with a platform-stable stream.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shorthand for `seeded_rng(derive_seed(base, tag, index))`.
pub fn stream(base: u64, tag: &str, index: u64) -> ChaCha8Rng {
    seeded_rng(derive_seed(base, tag, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn distinct_tags_give_distinct_streams() {
        let a = derive_seed(7, "folds", 0);
        let b = derive_seed(7, "init", 0);
        let c = derive_seed(7, "folds", 1);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(b, c);
    }

    #[test]
    fn derivation_is_stable() {
        // Frozen values: a change here silently reshuffles every split,
        // initialization, and augmentation stream in the crate.
        assert_eq!(derive_seed(0, "", 0), 0xc217_ac47_8e5d_0150);
        assert_eq!(derive_seed(42, "folds", 3), 0x56a8_d9fa_49f7_0422);
    }

    #[test]
    fn streams_are_reproducible() {
        let mut r1 = stream(9, "noise", 4);
        let mut r2 = stream(9, "noise", 4);
        for _ in 0..16 {
            assert_eq!(r1.next_u64(), r2.next_u64());
        }
    }
}
