//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream whose
//! seed is derived from a base seed and a tuple of integer keys. Streams for
//! different keys are independent, and a stream depends only on its keys, so
//! work can be split across threads without changing any drawn value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `keys` into `seed`. Order of keys matters.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Stream for `(seed, keys...)`.
pub fn stream(seed: u64, keys: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, keys))
}

/// Counter-style stream: one ChaCha stream id per `index` under a fixed key.
/// Used for per-sample draws so that rows can be produced in any order.
pub fn indexed_stream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Stable identifiers for the places randomness is consumed.
pub(crate) mod keys {
    pub const INIT_RANDOM: u64 = 1;
    pub const EIGENMATRIX: u64 = 2;
    pub const DIAG_DOMINANT: u64 = 3;
    pub const KRONECKER_LEFT: u64 = 4;
    pub const KRONECKER_RIGHT: u64 = 5;
    pub const GENERAL_PSD: u64 = 6;
    pub const LANCZOS: u64 = 7;
    pub const PAIR: u64 = 8;
    pub const NOISE: u64 = 9;
    pub const PROBE: u64 = 10;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_keys_same_stream() {
        let a: Vec<u64> = stream(7, &[1, 2]).random_iter().take(4).collect();
        let b: Vec<u64> = stream(7, &[1, 2]).random_iter().take(4).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn key_order_matters() {
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
    }

    #[test]
    fn indexed_streams_differ() {
        let a: u64 = indexed_stream(3, 0).random();
        let b: u64 = indexed_stream(3, 1).random();
        assert_ne!(a, b);
    }
}
