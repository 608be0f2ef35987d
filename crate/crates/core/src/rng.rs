//! Counter-based random streams.
//!
//! Every replica of an experiment owns a ChaCha8 stream addressed by
//! `(seed, replica, lane)`. Streams are independent of worker count and
//! scheduling: replica `r` draws the same numbers whether it runs first, last,
//! or on another thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-worker generator type.
pub type StreamRng = ChaCha8Rng;

/// Independent sub-streams of a single replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    /// Base disorder weights.
    Disorder = 0,
    /// Perturbation variables layered on top of the base disorder.
    Perturbation = 1,
    /// Gibbs path sampling.
    Paths = 2,
    /// Anything else (moment checks, reference draws).
    Auxiliary = 3,
}

const LANES: u64 = 4;

/// Generator for `(seed, replica, lane)`.
pub fn stream(seed: u64, replica: u64, lane: Lane) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica.wrapping_mul(LANES).wrapping_add(lane as u64));
    rng
}
