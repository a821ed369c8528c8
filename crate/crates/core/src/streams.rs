//! Seed-derived RNG substreams.
//!
//! One master seed fans out into independent ChaCha streams so that, e.g.,
//! changing how many Monte-Carlo draws a termination check uses cannot perturb
//! the arrival/click sequence of the surrounding experiment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic substream `stream` of the generator seeded with `seed`.
pub(crate) fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
