//! Seeded random streams. Every consumer of randomness in a run draws from
//! its own ChaCha stream derived from the run seed, so adding draws in one
//! place never shifts the numbers another place sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Dropout = 3,
    WeightNoise = 4,
    Data = 5,
    LabelNoise = 6,
    Predict = 7,
}

pub fn stream(seed: u64, purpose: Stream) -> Rng {
    substream(seed, purpose, 0)
}

/// The `index`-th independent stream for `purpose`, e.g. one per Monte-Carlo
/// sample when those are drawn in parallel.
pub fn substream(seed: u64, purpose: Stream, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) | index);
    rng
}
