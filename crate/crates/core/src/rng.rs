//! Counter-based seeding. Every random draw in the crate comes from a stream
//! identified by `(master seed, stream id, counter)`, so adding or removing a
//! consumer never shifts the numbers another consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dense::{DenseMatrix, DenseVector};

pub type Rng = ChaCha8Rng;

/// Stream ids used across the crate.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const TASK: u64 = 2;
    pub const BATCH: u64 = 3;
    pub const PROBE: u64 = 4;
    pub const VERIFY: u64 = 5;
    pub const BENCH: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, stream_id, counter)`.
pub fn stream(seed: u64, stream_id: u64, counter: u64) -> Rng {
    let mut key = [0u8; 32];
    let mut state = splitmix64(seed);
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        state = splitmix64(
            state ^ match i {
                0 => 0,
                1 => stream_id,
                2 => counter,
                _ => stream_id.rotate_left(32) ^ counter.rotate_left(17),
            },
        );
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

pub fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Matrix with i.i.d. `N(0, std²)` entries.
pub fn normal_matrix(rng: &mut Rng, rows: usize, cols: usize, std: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| std * normal(rng))
}

/// Vector with i.i.d. `N(0, std²)` entries.
pub fn normal_vector(rng: &mut Rng, len: usize, std: f64) -> DenseVector {
    let mut v = DenseVector::zeros(len);
    for x in v.as_mut_slice() {
        *x = std * normal(rng);
    }
    v
}
