//! Seeded random streams.
//!
//! Every random draw in a run comes from one master seed split into named
//! streams, so changing how one component consumes randomness never perturbs
//! another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Dataset construction: splitting and synthetic generation.
    Data,
    /// Parameter initialization.
    Init,
    /// BPR triple sampling.
    Sampling,
    /// Generic (unlabelled) triple sampling for distillation.
    Generic,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Data => 1,
            Stream::Init => 2,
            Stream::Sampling => 3,
            Stream::Generic => 4,
        }
    }
}

/// Rng for `stream`, further separated by `tag` (e.g. a modality index).
pub fn stream_rng(seed: u64, stream: Stream, tag: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream.id() << 32) | u64::from(tag));
    rng
}
