//! Fixtures for the apply benchmarks.

use moka_core::adapter::{materialize_delta, MixtureAdapter, PairShape};
use moka_core::dense::{DenseMatrix, DenseVector};
use moka_core::rng::{normal_vector, stream, streams};
use moka_core::sample::adapter_from_shapes;

/// `((m_a, n_a), (m_b, n_b))`.
pub type FactorShapes = ((usize, usize), (usize, usize));

/// Factor shapes benchmarked by default.
pub const SHAPES: &[FactorShapes] = &[
    ((8, 8), (8, 8)),
    ((16, 16), (16, 16)),
    ((32, 32), (32, 32)),
    ((64, 64), (64, 64)),
];

/// One single-pair adapter, an input, and its materialized update.
pub struct ApplyCase {
    pub label: String,
    pub adapter: MixtureAdapter,
    pub x: DenseVector,
    pub explicit: DenseMatrix,
}

pub fn apply_case(a: (usize, usize), b: (usize, usize), seed: u64) -> ApplyCase {
    let shape = PairShape::new(a, b);
    let (m, n) = (shape.out_capacity(), shape.in_capacity());
    let mut rng = stream(seed, streams::BENCH, 0);
    let adapter = adapter_from_shapes(&mut rng, &[shape], m, n);
    let x = normal_vector(&mut rng, n, 1.0);
    let explicit = materialize_delta(&adapter).expect("benchmark shapes fit under the cap");
    ApplyCase {
        label: format!("{}x{}:{}x{}", a.0, a.1, b.0, b.1),
        adapter,
        x,
        explicit,
    }
}
