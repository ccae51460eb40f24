//! Keyed random streams.
//!
//! Every random draw in a run is a pure function of `(seed, purpose, index)`.
//! A stream is a ChaCha8 key derived from the seed, a purpose tag and any
//! split path; draws seek directly to their index, so there is no shared
//! generator state, two purposes can never perturb each other, and any value
//! can be regenerated in isolation.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

/// ChaCha stream ids: 0 holds indexed words, the top id drives shuffles and
/// normals use `index + 1`.
const SHUFFLE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stream {
    key: [u8; 32],
}

impl Stream {
    pub fn new(seed: u64, purpose: &str) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(purpose.as_bytes());
        Stream { key: h.finalize().into() }
    }

    /// Derive a child stream, e.g. one per parameter tensor or per epoch.
    pub fn split(self, sub: u64) -> Self {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update(sub.to_le_bytes());
        Stream { key: h.finalize().into() }
    }

    fn generator(self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(stream);
        rng
    }

    fn at(self, index: u64) -> ChaCha8Rng {
        let mut rng = self.generator(0);
        rng.set_word_pos(2 * u128::from(index));
        rng
    }

    pub fn word(self, index: u64) -> u64 {
        self.at(index).next_u64()
    }

    /// Uniform in [0, 1).
    pub fn uniform(self, index: u64) -> f64 {
        self.at(index).random()
    }

    /// Standard normal.
    pub fn normal(self, index: u64) -> f64 {
        StandardNormal.sample(&mut self.generator(index.wrapping_add(1)))
    }

    pub fn shuffle<T>(self, items: &mut [T]) {
        items.shuffle(&mut self.generator(SHUFFLE_STREAM));
    }
}
