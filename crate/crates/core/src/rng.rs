//! Seeded random streams. Every consumer of randomness draws from its own
//! ChaCha stream derived from one master seed, so adding draws in one place
//! never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Split = 1,
    TrainNegatives = 2,
    EvalNegatives = 3,
    Init = 4,
    Synthetic = 5,
}

pub fn stream(seed: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}
