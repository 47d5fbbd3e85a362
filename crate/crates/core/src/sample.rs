//! Random instance generators shared by the verification harness and tests.

use rand::Rng as _;

use crate::adapter::{KronFactorPair, MixtureAdapter, PairShape};
use crate::dense::{matmul, DenseMatrix};
use crate::rng::{normal_matrix, Rng};

/// Random pair shape with every factor dimension in `1..=max_dim`.
pub fn random_pair_shape(rng: &mut Rng, max_dim: usize, allow_identity: bool) -> PairShape {
    let mut d = || rng.random_range(1..=max_dim.max(1));
    let (a_rows, a_cols, b_rows, b_cols) = (d(), d(), d(), d());
    if allow_identity && rng.random_bool(0.25) {
        PairShape::identity(a_cols, (b_rows, b_cols))
    } else {
        PairShape {
            a_rows,
            a_cols,
            b_rows,
            b_cols,
            identity_a: false,
        }
    }
}

/// Random `(m, n)` that every shape in `shapes` can serve, so padding and
/// truncation are both exercised.
pub fn random_layer_dims(rng: &mut Rng, shapes: &[PairShape]) -> (usize, usize) {
    let max_m = shapes.iter().map(PairShape::out_capacity).min().unwrap_or(1);
    let max_n = shapes.iter().map(PairShape::in_capacity).min().unwrap_or(1);
    (rng.random_range(1..=max_m), rng.random_range(1..=max_n))
}

/// Adapter with populated factors from given shapes and random gate logits in `[-1, 1]`.
pub fn adapter_from_shapes(
    rng: &mut Rng,
    shapes: &[PairShape],
    out_dim: usize,
    in_dim: usize,
) -> MixtureAdapter {
    let pairs = shapes
        .iter()
        .map(|s| {
            let b = normal_matrix(rng, s.b_rows, s.b_cols, 1.0 / (s.b_cols as f64).sqrt());
            if s.identity_a {
                KronFactorPair::with_identity(s.a_cols, b)
            } else {
                KronFactorPair::new(
                    normal_matrix(rng, s.a_rows, s.a_cols, 1.0 / (s.a_cols as f64).sqrt()),
                    b,
                )
            }
        })
        .collect();
    let logits = shapes.iter().map(|_| rng.random_range(-1.0..=1.0)).collect();
    MixtureAdapter::new(pairs, logits, out_dim, in_dim)
        .expect("generated shapes are valid by construction")
}

/// Adapter of `r` random pairs (dims ≤ `max_dim`) with random layer dims.
pub fn random_adapter(rng: &mut Rng, r: usize, max_dim: usize, allow_identity: bool) -> MixtureAdapter {
    let shapes: Vec<PairShape> = (0..r.max(1))
        .map(|_| random_pair_shape(rng, max_dim, allow_identity))
        .collect();
    let (m, n) = random_layer_dims(rng, &shapes);
    adapter_from_shapes(rng, &shapes, m, n)
}

/// `rows × cols` matrix of rank `k` (almost surely), built as a sum of `k`
/// Gaussian outer products.
pub fn planted_rank_matrix(rng: &mut Rng, rows: usize, cols: usize, k: usize) -> DenseMatrix {
    let u = normal_matrix(rng, rows, k.max(1), 1.0);
    let v = normal_matrix(rng, k.max(1), cols, 1.0);
    let m = matmul(&u, &v).expect("inner dimensions agree");
    if k == 0 {
        DenseMatrix::zeros(rows, cols)
    } else {
        m
    }
}
