//! Counter-based random streams.
//!
//! Each unit of stochastic work (a participant, a bootstrap replicate, a
//! simulation) owns a ChaCha stream addressed by `(seed, index)`. Output is
//! therefore independent of thread count and scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derive a child seed for a named sub-task, so nested loops (simulation ×
/// replicate) never share a stream.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
