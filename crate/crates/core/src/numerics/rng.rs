use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::math;
use super::tensor::Tensor;

/// Stream ids that keep the separate consumers of one run seed independent.
pub mod streams {
    pub const FRIEND_INIT: u64 = 1;
    pub const RULE_PAIRING: u64 = 2;
    pub const WEIGHTS: u64 = 3;
    pub const EDGE_DROPOUT: u64 = 4;
    pub const GUMBEL: u64 = 5;
    pub const KMEANS: u64 = 6;
    pub const PAIR_SAMPLE: u64 = 7;
}

/// Seeded random source (ChaCha8). Streams are portable: the same seed and
/// call sequence produce the same numbers on every platform.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream `stream` under the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Position in the stream, in 32-bit words consumed.
    pub fn position(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Moves to a position returned by [`Rng::position`].
    pub fn set_position(&mut self, pos: u128) {
        self.inner.set_word_pos(pos);
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Gumbel(0, 1) draw.
    pub fn gumbel(&mut self) -> f64 {
        gumbel_from_uniform(self.uniform())
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.inner.gen_range(0..n as u64) as usize
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

/// `-ln(-ln(u))` with `u` clamped to `[1e-12, 1 - 1e-12]`.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(1e-12, 1.0 - 1e-12);
    -math::ln(-math::ln(u))
}

pub fn gumbel_noise(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let mut t = Tensor::zeros(rows, cols);
    for x in t.data_mut() {
        *x = rng.gumbel();
    }
    t
}
