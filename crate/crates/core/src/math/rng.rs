//! Seeded, resumable random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed and a 64-bit
//! stream id. The full position is captured by [`RngState`], which is what
//! checkpoints persist.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Identifier stored in checkpoints for the ChaCha8 stream.
pub const RNG_ALGORITHM_CHACHA8: u32 = 1;

/// Serializable position of a [`SeededRng`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngState {
    pub algorithm: u32,
    pub seed: u64,
    pub stream: u64,
    /// Word (32-bit) position within the keystream.
    pub word_pos: u128,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            algorithm: RNG_ALGORITHM_CHACHA8,
            seed,
            stream: 0,
            word_pos: 0,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self.word_pos = 0;
        self
    }
}

/// A ChaCha8 stream that remembers its seed so it can be checkpointed.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

/// Opens the stream for `seed` at position zero.
pub fn seeded_stream(seed: u64) -> SeededRng {
    SeededRng::new(seed)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream `stream` of the same seed (used per epoch).
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = Self::new(seed);
        rng.inner.set_stream(stream);
        rng
    }

    pub fn state(&self) -> RngState {
        RngState {
            algorithm: RNG_ALGORITHM_CHACHA8,
            seed: self.seed,
            stream: self.inner.get_stream(),
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn from_state(state: &RngState) -> Result<Self> {
        if state.algorithm != RNG_ALGORITHM_CHACHA8 {
            return Err(Error::invalid(format!(
                "unknown rng algorithm id {}",
                state.algorithm
            )));
        }
        let mut rng = Self::new(state.seed);
        rng.inner.set_stream(state.stream);
        rng.inner.set_word_pos(state.word_pos);
        Ok(rng)
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

/// Derives a child seed from `seed` and a purpose tag such as `"probe"`.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word)
}
