use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator streams derived from one user seed, so that
/// e.g. initialization and dropout draws never share state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    NodeSplit = 1,
    EdgeSplit = 2,
    Negatives = 3,
    Init = 4,
    Dropout = 5,
    EpochNegatives = 6,
    Synthetic = 7,
    GradCheck = 8,
    Reduction = 9,
}

pub fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Stream for a per-step draw (e.g. one epoch's dropout masks).
pub fn step_rng(seed: u64, stream: Stream, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream as u64);
    rng
}
