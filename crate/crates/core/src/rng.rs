//! Seeded random streams.
//!
//! Every stochastic routine derives its generators from a user seed and a
//! stream index, so results do not depend on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for stream `stream` of the master `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
