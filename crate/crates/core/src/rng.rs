//! Seeded, splittable random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the experiment seed and an
//! independent 64-bit stream id, so trial `i` draws the same numbers no matter
//! how trials are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose of a substream within one Monte Carlo trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Switching,
    Noise,
    Sampling,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Switching => 0,
            Stream::Noise => 1,
            Stream::Sampling => 2,
        }
    }
}

/// Generator for `(seed, trial, purpose)`.
pub fn substream(seed: u64, trial: u64, purpose: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial.wrapping_mul(4).wrapping_add(purpose.tag()));
    rng
}
