//! Named random streams derived from one master seed.
//!
//! Every stochastic component draws from its own ChaCha stream so that, for a
//! fixed master seed, realized flexibility, forecast noise and prices are the
//! same no matter which selection method is running.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Fleet = 1,
    Actuals = 2,
    ForecastNoise = 3,
    AccuracyDrift = 4,
    Prices = 5,
    Exploration = 6,
    Replay = 7,
    Dropout = 8,
    NetworkInit = 9,
}

/// Rng for `stream`, optionally split further by `index` (e.g. per LFE).
pub fn rng_for(master: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((stream as u64) << 32) | (index & 0xffff_ffff));
    rng
}

/// A u64 seed derived from a named stream, for components that take raw seeds.
pub fn seed_for(master: u64, stream: Stream, index: u64) -> u64 {
    use rand::Rng;
    rng_for(master, stream, index).random()
}
