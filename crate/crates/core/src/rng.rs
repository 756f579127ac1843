//! Counter-based random streams derived from a master seed.
//!
//! Every consumer of randomness gets its own ChaCha stream, addressed by a
//! domain and an index (agent id, tuple id, ...). Streams never overlap, so
//! results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    ProblemData = 1,
    AgentState = 2,
    Attack = 3,
    AgentSamples = 4,
    AgentFixedNoise = 5,
    BoundValidation = 6,
}

/// Stream `index` of `domain` under `seed`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 40) | (index & ((1 << 40) - 1)));
    rng
}

/// Block `counter` of a stream. Each block owns 2^40 words, far more than a
/// single iteration ever draws.
pub fn stream_at(seed: u64, domain: Domain, index: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = stream(seed, domain, index);
    rng.set_word_pos(u128::from(counter) << 40);
    rng
}

/// Derives a child seed, used when a config leaves a sub-seed unset.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
