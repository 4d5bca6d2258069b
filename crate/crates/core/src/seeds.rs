//! Deterministic random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for sub-stream `stream` of `seed`.
///
/// Distinct streams are independent, so per-replicate work can run in any
/// order or on any thread.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids reserved for fixed-purpose draws.
pub mod streams {
    pub const CALIBRATE_INTERCEPTS: u64 = 1 << 40;
    pub const CALIBRATE_CENSORING: u64 = (1 << 40) + 1;
    pub const ESTIMAND: u64 = (1 << 40) + 2;
    pub const EVENT_RATES: u64 = (1 << 40) + 3;
    pub const COHORT: u64 = (1 << 40) + 4;
}
