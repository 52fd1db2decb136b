//! Seeded substreams: one ChaCha stream per `(seed, replication, purpose)`,
//! independent of scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Fixed stream ids so that simulation and initialization draws of the same
/// replication never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Simulate = 0,
    Fit = 1,
    Probe = 2,
    Calibrate = 3,
}

pub fn substream(seed: u64, replication: u64, purpose: Purpose) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication.wrapping_mul(8).wrapping_add(purpose as u64));
    rng
}

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
