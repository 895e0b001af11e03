//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by a run
//! seed and a stream id, so work items can be generated in any order (or in
//! parallel) without changing their values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream id namespaces. Streams from different namespaces never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Distortion = 1,
    Subset = 2,
    Init = 3,
    Shuffle = 4,
    Harness = 5,
    Report = 6,
}

/// Returns the RNG for `(seed, domain, index)`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 48) ^ index);
    rng
}
