//! Counter-based random streams.
//!
//! Every random draw is addressed by `(seed, lane, step)`: the seed keys a
//! ChaCha8 generator, the lane selects one of its 2^64 streams, and the step
//! jumps to a fixed offset inside that stream. Any draw can be reproduced
//! without replaying the ones before it, so work can be split across threads
//! in any order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 32-bit words reserved for each step within a lane.
const WORDS_PER_STEP: u128 = 1 << 32;

/// Generator positioned at the start of block `(lane, step)` of `seed`.
pub fn stream(seed: u64, lane: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(lane);
    rng.set_word_pos(u128::from(step) * WORDS_PER_STEP);
    rng
}
