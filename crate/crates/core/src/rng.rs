//! Named random substreams.
//!
//! Every stochastic component draws from its own ChaCha stream derived from the
//! run seed and a component name, so varying one component (say, the attack
//! seed) never shifts the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xxhash_rust::xxh3::xxh3_64;

pub type Stream = ChaCha8Rng;

pub fn substream(seed: u64, name: &str) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(xxh3_64(name.as_bytes()));
    rng
}

/// Substream for the `index`-th member of a family (one per seed replicate,
/// bootstrap resample, ...).
pub fn indexed_substream(seed: u64, name: &str, index: u64) -> Stream {
    let mixed = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    substream(mixed, name)
}
