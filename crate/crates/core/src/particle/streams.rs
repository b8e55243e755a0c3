//! Counter-addressed random streams.
//!
//! Every draw is located by `(stream, word position)` inside a single ChaCha8
//! key derived from the user seed, so a neuron's uniform at a given step is the
//! same no matter how neurons are chunked across threads.
//!
//! * stream `0`: initial-condition sampling, one fixed block of words per chunk
//!   of [`INIT_CHUNK`] neurons;
//! * stream `n + 1`: the spike uniforms of step `n`, neuron `i` at word `2 i`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Neurons per initial-condition chunk.
pub const INIT_CHUNK: usize = 1024;
/// Words reserved for one initial-condition chunk (far above what the normal
/// sampler consumes for `INIT_CHUNK` neurons).
const INIT_CHUNK_WORDS: u128 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamSet {
    seed: u64,
    base: ChaCha8Rng,
}

impl StreamSet {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator positioned at the initial-condition block of `chunk`.
    pub fn init_chunk(&self, chunk: usize) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(0);
        rng.set_word_pos(chunk as u128 * INIT_CHUNK_WORDS);
        rng
    }

    /// Generator positioned at the uniform of neuron `first` for step `step`.
    /// Consecutive `random::<f64>()` calls then yield neurons `first`, `first + 1`, ...
    pub fn spike_uniforms(&self, step: u64, first: usize) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(step.wrapping_add(1));
        rng.set_word_pos(2 * first as u128);
        rng
    }
}

/// Derives an independent seed for sub-run `index` of an experiment seeded with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
