//! Seeded, platform-independent randomness helpers.
//!
//! Everything random in the pipeline goes through ChaCha8 streams drawn as
//! `u64`/`f64`, never `usize`, so results do not depend on pointer width.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Independent stream `stream` under `seed`.
pub fn rng(seed: u64, stream: u64) -> SeededRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Uniform index in `0..n`. `n` must be nonzero.
#[inline]
pub fn index_below(rng: &mut SeededRng, n: usize) -> usize {
    rng.random_range(0..n as u64) as usize
}

/// Uniform on `[0, 1)`.
#[inline]
pub fn unit(rng: &mut SeededRng) -> f64 {
    rng.random::<f64>()
}

/// Fisher-Yates shuffle.
pub fn shuffle<T>(items: &mut [T], rng: &mut SeededRng) {
    for i in (1..items.len()).rev() {
        let j = index_below(rng, i + 1);
        items.swap(i, j);
    }
}

pub fn permutation(n: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    shuffle(&mut idx, rng);
    idx
}
