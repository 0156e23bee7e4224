//! Seed derivation for counter-based random streams.
//!
//! Every random draw in the toolkit comes from a ChaCha stream whose key is a
//! hash of `(seed, tag, indices...)`, so results depend only on those values
//! and never on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a tag and a list of integers into a 64-bit key.
pub fn derive(seed: u64, tag: &str, parts: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ 0x0067_656F_7265_6964);
    for b in tag.bytes() {
        h = splitmix(h ^ b as u64);
    }
    for &p in parts {
        h = splitmix(h ^ p);
    }
    h
}

pub fn stream(seed: u64, tag: &str, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tag, parts))
}
