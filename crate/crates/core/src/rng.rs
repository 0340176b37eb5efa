//! Counter-based random streams.
//!
//! Every random draw made by a sampler belongs to a stream keyed by
//! `(base_seed, iteration, stream id)`. Streams never share state, so an
//! iteration's parameter draw, its simulation stages and its stop-coin are
//! reproducible in isolation, independent of worker count and of whether
//! other streams were consumed at all.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type handed to simulators.
pub type StreamRng = ChaCha8Rng;

/// Logical stream within one iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamId {
    /// Parameter proposal draw.
    Theta,
    /// Early-stopping coin flips.
    Coin,
    /// Random likelihood estimator (RW-IS).
    Estimator,
    /// Simulation stage `k`.
    Stage(usize),
}

impl StreamId {
    fn tag(self) -> u64 {
        match self {
            StreamId::Theta => 1,
            StreamId::Coin => 2,
            StreamId::Estimator => 3,
            StreamId::Stage(k) => 0x100 + k as u64,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Source of per-iteration streams for one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Streams {
    base_seed: u64,
}

impl Streams {
    pub fn new(base_seed: u64) -> Self {
        Self { base_seed }
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    /// Deterministic generator for `(iteration, id)`.
    pub fn rng(&self, iteration: u64, id: StreamId) -> StreamRng {
        let key = mix64(
            mix64(mix64(self.base_seed) ^ iteration) ^ id.tag().wrapping_mul(0xD134_2543_DE82_EF95),
        );
        let mut seed = [0u8; 32];
        let mut state = key;
        for chunk in seed.chunks_exact_mut(8) {
            state = mix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

/// Seed for a standalone generator derived from a base seed and a label.
pub fn derived_seed(base_seed: u64, label: u64) -> u64 {
    mix64(base_seed ^ mix64(label))
}
