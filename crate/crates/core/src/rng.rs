//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream addressed by
//! `(seed, domain, index)`, so the value a given disk, sample or Monte-Carlo
//! realization sees does not depend on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Keeping them distinct means that, for example, the
/// bootstrap draws never share a stream with the Monte-Carlo normals.
pub mod domain {
    pub const RADII: u64 = 1;
    pub const PLACEMENT: u64 = 2;
    pub const JIGGLE: u64 = 3;
    pub const BOOTSTRAP: u64 = 4;
    pub const GAUSSIAN: u64 = 5;
    pub const TRUTH: u64 = 6;
    pub const PICK: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `index` within `domain`.
pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(domain)));
    rng.set_stream(index);
    rng
}
