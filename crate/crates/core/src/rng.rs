//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! user seed and a fixed stream id, so results depend only on `(seed, stream)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub mod stream {
    pub const ENV_FEATURES: u64 = 1;
    pub const ENV_REWARD: u64 = 2;
    pub const MODEL_CLASS: u64 = 3;
    pub const MISSPEC: u64 = 4;
    pub const ROLLOUT: u64 = 5;
    pub const ORACLE: u64 = 6;
    pub const FREQUENCIES: u64 = 7;
    pub const DENSITY_SAMPLES: u64 = 8;
    pub const LEMMAS: u64 = 9;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
