//! Seed handling. Every random stage draws from its own ChaCha stream derived
//! from a single 64-bit run seed, so stages can be re-run independently.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers for the pipeline stages that consume randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    TrainingSet = 1,
    TrainingSplit = 2,
    WeightInit = 3,
    Batching = 4,
    SyntheticData = 5,
}

/// Returns the generator for `stage` under the run seed `seed`.
pub fn stream(seed: u64, stage: Stage) -> ChaCha8Rng {
    stream_at(seed, stage as u64, 0)
}

/// Returns the `counter`-th sub-stream of `stage`.
pub fn stream_at(seed: u64, stage: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage << 40 | counter);
    rng
}
