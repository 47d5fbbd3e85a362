//! Gated mixtures of Kronecker adapters.
//!
//! A layer update `ΔW = Σ_i α_i (A_i ⊗ B_i)` is never materialized on the hot
//! path: each term is applied to an input as `V(B_i · R(x) · A_iᵀ)`. The crate
//! provides the dense primitives, the adapter forward pass, its closed-form
//! backward pass, a plain SGD trainer with convergence diagnostics, and a few
//! synthetic tasks to train on.

pub mod adapter;
pub mod dense;
pub mod error;
pub mod grad;
pub mod rng;
pub mod sample;
pub mod shapes;
pub mod tasks;
pub mod trainer;

pub use adapter::{
    adapted_forward, apply_mixture, apply_pair, gates, materialize_delta, softmax, GateMode,
    KronFactorPair, LeftFactor, MixtureAdapter, PairShape,
};
pub use dense::{DenseMatrix, DenseVector};
pub use error::{MokaError, Result, Shape};
pub use grad::{backward_mixture, finite_difference_check, AdapterGradients, FdReport, PairGradient};
pub use shapes::{count_trainable_params, validate_config, ModelPreset, ShapeConfig, Variant};
pub use trainer::{
    convergence_diagnostic, optimal_eta, run_training, sgd_step, theorem1_bound, BoundReport,
    TrainConfig, TrainRecord,
};
