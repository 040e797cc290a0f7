//! Seeded, positionable random streams.
//!
//! Backed by ChaCha8 with the stream id mapped onto ChaCha's stream counter, so
//! `(seed, stream)` pairs give independent sequences and the word position can
//! be saved and restored exactly.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::matrix::Matrix;
use crate::real::Real;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

/// Serializable position of an [`RngStream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngPosition {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// A fresh stream with the same seed and a different stream id.
    pub fn fork(&self, stream: u64) -> Self {
        Self::new(self.seed, stream)
    }

    pub fn position(&self) -> RngPosition {
        RngPosition {
            seed: self.seed,
            stream: self.stream,
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn from_position(pos: RngPosition) -> Self {
        let mut s = Self::new(pos.seed, pos.stream);
        s.inner.set_word_pos(pos.word_pos);
        s
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// `rows x cols` matrix of independent standard normal draws.
    pub fn normal_matrix<T: Real>(&mut self, rows: usize, cols: usize) -> Matrix<T> {
        let data = (0..rows * cols)
            .map(|_| T::from_f64_lossy(self.normal()))
            .collect();
        Matrix::from_vec(rows, cols, data).expect("length matches shape")
    }

    pub fn uniform_matrix<T: Real>(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix<T> {
        let data = (0..rows * cols)
            .map(|_| T::from_f64_lossy(self.uniform_range(lo, hi)))
            .collect();
        Matrix::from_vec(rows, cols, data).expect("length matches shape")
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<X>(&mut self, xs: &mut [X]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// `k` distinct elements of `pool`, uniformly without replacement, in draw order.
    pub fn choose_distinct<X: Copy>(&mut self, pool: &[X], k: usize) -> Vec<X> {
        let mut buf = pool.to_vec();
        let k = k.min(buf.len());
        for i in 0..k {
            let j = i + self.below(buf.len() - i);
            buf.swap(i, j);
        }
        buf.truncate(k);
        buf
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
