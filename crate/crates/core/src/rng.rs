//! Random streams.
//!
//! Every run draws from ChaCha8 seeded with the master seed and switched to
//! its own stream (the replicate index). ChaCha8 output does not depend on
//! the platform, and stream selection makes each replicate reproducible no
//! matter which worker runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
