//! Deterministic sub-seed derivation.
//!
//! Long-running operations (dataset generation, sweeps) give every record or
//! trial its own RNG seeded from the master seed and the item's indices.
//! Parallel and serial execution therefore produce identical results, and
//! any record can be regenerated in isolation.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with index parts into a new seed.  The mapping is
/// fixed for all time; changing it would silently change every generated
/// dataset.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut state = master;
    let mut out = splitmix64(&mut state);
    for &p in parts {
        state ^= p.wrapping_mul(0xA24B_AED4_963E_E407);
        out ^= splitmix64(&mut state);
    }
    out
}

/// RNG used throughout the crate, constructed from a derived seed.
pub fn rng_from(master: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_index_sensitive() {
        let a = derive_seed(7, &[0, 3]);
        let b = derive_seed(7, &[0, 3]);
        let c = derive_seed(7, &[0, 4]);
        let d = derive_seed(7, &[1, 3]);
        let e = derive_seed(8, &[0, 3]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(a, e);
    }

    #[test]
    fn many_records_get_distinct_seeds() {
        let mut seen = std::collections::BTreeSet::new();
        for t in 0..10_000u64 {
            seen.insert(derive_seed(42, &[t]));
        }
        assert_eq!(seen.len(), 10_000);
    }
}
