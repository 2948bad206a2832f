//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by a seed
//! derived from the run seed plus a tuple of integers (node id, epoch, layer
//! tag, ...). Streams are therefore independent of thread scheduling and of
//! the order in which nodes are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `base` with each entry of `parts` into a new 64-bit seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(base: u64, parts: &[u64]) -> Rng {
    rng_from(derive_seed(base, parts))
}

/// Stream tags, so that streams drawn for different purposes never collide.
pub(crate) mod tag {
    pub const DELETE_EDGES: u64 = 1;
    pub const ATTENTION_INIT: u64 = 2;
    pub const PARAM_INIT: u64 = 3;
    pub const SAMPLE_OUTER: u64 = 4;
    pub const SAMPLE_INNER: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const EPOCH: u64 = 7;
    pub const EVAL: u64 = 8;
    pub const HSIC: u64 = 9;
    pub const HSIC_PAIRS: u64 = 10;
    pub const HSIC_HELDOUT: u64 = 11;
    pub const SPLIT: u64 = 12;
    pub const SYNTH: u64 = 13;
    pub const MEDIAN: u64 = 14;
    pub const HSIC_NULL: u64 = 15;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derived_streams_are_reproducible_and_distinct() {
        let a: u64 = derived_rng(7, &[1, 2]).gen();
        let b: u64 = derived_rng(7, &[1, 2]).gen();
        let c: u64 = derived_rng(7, &[2, 1]).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive_seed(0, &[]), derive_seed(1, &[]));
    }
}
