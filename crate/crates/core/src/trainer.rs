//! Plain SGD over adapter parameters with a frozen base, and the
//! gradient-norm diagnostics for constant-step SGD on an `L`-smooth loss:
//!
//! ```text
//! (1/T) Σ_t ‖∇L(u_t; ξ_t)‖²  ≤  (L(u_0) − L_min) / (ηT)  +  η·L·G / 2
//! ```
//!
//! which is minimized at `η* = sqrt(2 (L(u_0) − L_min) / (L·G·T))`.

use serde::Serialize;

use crate::adapter::MixtureAdapter;
use crate::dense::DenseVector;
use crate::error::{MokaError, Result};
use crate::grad::{block_grad, block_values, block_values_mut, param_blocks, AdapterGradients};
use crate::rng::{normal_vector, stream, streams, Rng};

/// Loss above which a run counts as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;

/// A trainable objective over one or more adapters.
pub trait Objective {
    type Batch;

    /// Fixed probe set used for full-batch steps and evaluation.
    fn full_batch(&self) -> &Self::Batch;

    /// Fresh mini-batch of `size` examples drawn from `rng`.
    fn sample_batch(&self, rng: &mut Rng, size: usize) -> Self::Batch;

    fn loss(&self, adapters: &[MixtureAdapter], batch: &Self::Batch) -> Result<f64>;

    fn loss_and_grads(
        &self,
        adapters: &[MixtureAdapter],
        batch: &Self::Batch,
    ) -> Result<(f64, Vec<AdapterGradients>)>;

    /// Largest curvature of the full-batch loss viewed as a function of the
    /// materialized update(s), when that loss is a quadratic form.
    fn smoothness(&self) -> Option<f64> {
        None
    }

    /// Minimum loss over the adapter class, when known analytically.
    fn known_min(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    /// Every step uses [`Objective::full_batch`].
    Full,
    /// Every step draws this many fresh examples from stream `(seed, BATCH, t)`.
    Sampled(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub eta: f64,
    pub steps: usize,
    pub batch: BatchMode,
    pub seed: u64,
    pub record_every: usize,
}

impl TrainConfig {
    pub fn full_batch(eta: f64, steps: usize) -> Self {
        Self {
            eta,
            steps,
            batch: BatchMode::Full,
            seed: 0,
            record_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(MokaError::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if self.steps == 0 {
            return Err(MokaError::Config("steps must be at least 1".into()));
        }
        if let BatchMode::Sampled(0) = self.batch {
            return Err(MokaError::Config("batch_size must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(MokaError::Config("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// One logged step. `loss` and the gradient are evaluated at the parameters
/// *before* the step's update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainRecord {
    pub step: usize,
    pub loss: f64,
    pub grad_norm_sq: f64,
    /// Mean of `grad_norm_sq` over steps `0..=step`.
    pub mean_grad_norm_sq: f64,
    /// `Σ_i ‖∇A_i‖²‖B_i‖² + ‖A_i‖²‖∇B_i‖²` at this step.
    pub factor_bound_term: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<TrainRecord>,
    pub adapters: Vec<MixtureAdapter>,
    /// Loss at step 0.
    pub initial_loss: f64,
    /// Smallest per-step loss seen.
    pub best_loss: f64,
    /// Mean squared gradient norm over all `T` steps.
    pub mean_grad_norm_sq: f64,
    /// Largest `factor_bound_term` over the run (empirical `G`).
    pub max_factor_bound_term: f64,
}

/// `θ ← θ − η·∇θ` for every trainable block, gate logits included.
pub fn sgd_step(adapter: &mut MixtureAdapter, grads: &AdapterGradients, eta: f64) {
    for block in param_blocks(adapter) {
        let g = block_grad(grads, block);
        for (p, d) in block_values_mut(adapter, block).iter_mut().zip(g) {
            *p -= eta * d;
        }
    }
}

/// Stacked squared parameter-gradient norm over several adapters.
pub fn grad_norm_sq(grads: &[AdapterGradients]) -> f64 {
    grads.iter().map(AdapterGradients::param_norm_sq).sum()
}

/// Runs `config.steps` SGD steps on `objective`, starting from `adapters`.
pub fn run_training<O: Objective>(
    config: &TrainConfig,
    objective: &O,
    adapters: Vec<MixtureAdapter>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut adapters = adapters;
    let mut records = Vec::new();
    let mut sum = 0.0;
    let mut initial_loss = f64::NAN;
    let mut best_loss = f64::INFINITY;
    let mut max_bound_term = 0.0_f64;
    for t in 0..config.steps {
        let sampled;
        let batch = match config.batch {
            BatchMode::Full => objective.full_batch(),
            BatchMode::Sampled(size) => {
                let mut rng = stream(config.seed, streams::BATCH, t as u64);
                sampled = objective.sample_batch(&mut rng, size);
                &sampled
            }
        };
        let (loss, grads) = objective.loss_and_grads(&adapters, batch)?;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(MokaError::Divergence { step: t, loss });
        }
        if t == 0 {
            initial_loss = loss;
        }
        best_loss = best_loss.min(loss);
        let g2 = grad_norm_sq(&grads);
        let bound_term: f64 = adapters
            .iter()
            .zip(&grads)
            .map(|(a, g)| g.factor_bound_term(a))
            .sum();
        max_bound_term = max_bound_term.max(bound_term);
        sum += g2;
        if t % config.record_every == 0 || t + 1 == config.steps {
            records.push(TrainRecord {
                step: t,
                loss,
                grad_norm_sq: g2,
                mean_grad_norm_sq: sum / (t + 1) as f64,
                factor_bound_term: bound_term,
            });
        }
        for (adapter, g) in adapters.iter_mut().zip(&grads) {
            sgd_step(adapter, g, config.eta);
        }
    }
    Ok(TrainOutcome {
        records,
        adapters,
        initial_loss,
        best_loss,
        mean_grad_norm_sq: sum / config.steps as f64,
        max_factor_bound_term: max_bound_term,
    })
}

/// `gap/(ηT) + η·L·G/2`.
pub fn theorem1_bound(gap: f64, smoothness: f64, grad_bound: f64, eta: f64, steps: usize) -> f64 {
    gap / (eta * steps as f64) + eta * smoothness * grad_bound / 2.0
}

/// Step size that balances the two bound terms.
pub fn optimal_eta(gap: f64, smoothness: f64, grad_bound: f64, steps: usize) -> f64 {
    (2.0 * gap / (smoothness * grad_bound * steps as f64)).sqrt()
}

/// Inputs to [`convergence_diagnostic`] that come from outside the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// `L(u_0) − L_min`.
    pub gap: f64,
    pub smoothness: f64,
    pub grad_bound: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub gap: f64,
    #[serde(rename = "L")]
    pub smoothness: f64,
    #[serde(rename = "G")]
    pub grad_bound: f64,
    pub eta: f64,
    #[serde(rename = "T")]
    pub steps: usize,
    pub bound: f64,
    pub measured_avg: f64,
    pub eta_star: f64,
    #[serde(skip)]
    pub violated: bool,
}

/// Compares the measured mean squared gradient norm against the bound.
pub fn convergence_diagnostic(records: &[TrainRecord], inputs: BoundInputs) -> Result<BoundReport> {
    let last = records
        .last()
        .ok_or_else(|| MokaError::Config("no training records".into()))?;
    let steps = last.step + 1;
    let bound = theorem1_bound(inputs.gap, inputs.smoothness, inputs.grad_bound, inputs.eta, steps);
    let measured_avg = last.mean_grad_norm_sq;
    Ok(BoundReport {
        gap: inputs.gap,
        smoothness: inputs.smoothness,
        grad_bound: inputs.grad_bound,
        eta: inputs.eta,
        steps,
        bound,
        measured_avg,
        eta_star: optimal_eta(inputs.gap, inputs.smoothness, inputs.grad_bound, steps),
        violated: measured_avg > bound * (1.0 + 1e-6),
    })
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by power
/// iteration from a seeded start.
pub fn power_iteration<F>(mut apply: F, dim: usize, iters: usize, seed: u64) -> f64
where
    F: FnMut(&DenseVector) -> DenseVector,
{
    let mut rng = stream(seed, streams::PROBE, 0);
    let mut v = normal_vector(&mut rng, dim, 1.0);
    let norm = v.norm_sq().sqrt();
    v = v.scaled(1.0 / norm);
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = apply(&v);
        lambda = v.dot(&w);
        let norm = w.norm_sq().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = w.scaled(1.0 / norm);
    }
    lambda
}

/// All trainable scalars of `adapters`, block by block.
pub fn flatten_params(adapters: &[MixtureAdapter]) -> Vec<f64> {
    let mut out = Vec::new();
    for a in adapters {
        for block in param_blocks(a) {
            out.extend_from_slice(block_values(a, block));
        }
    }
    out
}

/// Inverse of [`flatten_params`].
pub fn set_params(adapters: &mut [MixtureAdapter], values: &[f64]) {
    let mut offset = 0;
    for a in adapters.iter_mut() {
        for block in param_blocks(a) {
            let dst = block_values_mut(a, block);
            dst.copy_from_slice(&values[offset..offset + dst.len()]);
            offset += dst.len();
        }
    }
    assert_eq!(offset, values.len(), "parameter vector length");
}

/// Parameter gradients laid out like [`flatten_params`].
pub fn flatten_grads(adapters: &[MixtureAdapter], grads: &[AdapterGradients]) -> Vec<f64> {
    let mut out = Vec::new();
    for (a, g) in adapters.iter().zip(grads) {
        for block in param_blocks(a) {
            out.extend_from_slice(block_grad(g, block));
        }
    }
    out
}

/// Largest Hessian eigenvalue of `objective` on `batch` with respect to the
/// trainable parameters at `adapters`, by power iteration on central
/// differences of the gradient. Exact up to rounding when the loss is
/// quadratic in the parameters.
pub fn parameter_smoothness<O: Objective>(
    objective: &O,
    adapters: &[MixtureAdapter],
    batch: &O::Batch,
    iters: usize,
    seed: u64,
) -> Result<f64> {
    objective.loss_and_grads(adapters, batch)?;
    let theta = flatten_params(adapters);
    let h = 1e-4;
    let mut work = adapters.to_vec();
    let hvp = |v: &DenseVector| -> DenseVector {
        let mut grad_at = |sign: f64| -> Vec<f64> {
            let shifted: Vec<f64> = theta.iter().zip(v.as_slice()).map(|(t, d)| t + sign * h * d).collect();
            set_params(&mut work, &shifted);
            match objective.loss_and_grads(&work, batch) {
                Ok((_, g)) => flatten_grads(&work, &g),
                Err(_) => vec![0.0; theta.len()],
            }
        };
        let plus = grad_at(1.0);
        let minus = grad_at(-1.0);
        let out: Vec<f64> = plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect();
        DenseVector::from_vec(out).unwrap_or_else(|_| DenseVector::zeros(theta.len()))
    };
    Ok(power_iteration(hvp, theta.len(), iters, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{KronFactorPair, PairShape};
    use crate::dense::DenseMatrix;
    use crate::shapes::ProjectionShape;
    use crate::tasks::{make_planted, PlantedTask};

    fn scalar(v: f64) -> DenseMatrix {
        DenseMatrix::from_vec(1, 1, vec![v]).unwrap()
    }

    fn small_planted(seed: u64) -> (PlantedTask, MixtureAdapter) {
        let layout = ProjectionShape {
            name: "w".into(),
            out_dim: 8,
            in_dim: 8,
            pairs: vec![PairShape::new((2, 2), (4, 4))],
        };
        let task = make_planted(&layout, seed, 32).unwrap();
        let adapter = task.init_adapter(seed).unwrap();
        (task, adapter)
    }

    #[test]
    fn sgd_zero_gradient_is_noop() {
        let (_, adapter) = small_planted(1);
        let mut updated = adapter.clone();
        sgd_step(&mut updated, &AdapterGradients::zeros_like(&adapter), 0.3);
        assert_eq!(updated, adapter);
    }

    #[test]
    fn sgd_scalar_step() {
        let mut adapter =
            MixtureAdapter::new(vec![KronFactorPair::new(scalar(2.0), scalar(3.0))], vec![0.0], 1, 1)
                .unwrap();
        let mut g = AdapterGradients::zeros_like(&adapter);
        g.d_pairs[0].d_b[(0, 0)] = 10.0;
        sgd_step(&mut adapter, &g, 0.1);
        assert_eq!(adapter.pairs()[0].b()[(0, 0)], 2.0);
        assert_eq!(adapter.pairs()[0].a().unwrap()[(0, 0)], 2.0);
    }

    #[test]
    fn two_small_steps_differ_from_one_summed_step() {
        let (task, adapter) = small_planted(2);
        let eta = 0.05;
        let two = run_training(&TrainConfig::full_batch(eta, 2), &task, vec![adapter.clone()])
            .unwrap()
            .adapters;

        let batch = task.full_batch();
        let (_, g0) = task.loss_and_grads(std::slice::from_ref(&adapter), batch).unwrap();
        let mut mid = adapter.clone();
        sgd_step(&mut mid, &g0[0], eta);
        let (_, g1) = task.loss_and_grads(std::slice::from_ref(&mid), batch).unwrap();
        let mut summed = g0[0].clone();
        summed.accumulate(&g0[0], 1.0);
        let mut one = adapter.clone();
        sgd_step(&mut one, &summed, eta);
        // Re-evaluating the gradient after the first step changes the result.
        assert_ne!(one, two[0]);
        let mut replay = mid;
        sgd_step(&mut replay, &g1[0], eta);
        assert_eq!(replay, two[0]);
    }

    #[test]
    fn rejects_invalid_configs() {
        let (task, adapter) = small_planted(3);
        let mut cfg = TrainConfig::full_batch(0.1, 0);
        assert!(run_training(&cfg, &task, vec![adapter.clone()]).is_err());
        cfg.steps = 1;
        cfg.eta = -1.0;
        assert!(run_training(&cfg, &task, vec![adapter.clone()]).is_err());
        cfg.eta = 0.1;
        cfg.batch = BatchMode::Sampled(0);
        assert!(run_training(&cfg, &task, vec![adapter]).is_err());
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let (task, adapter) = small_planted(4);
        let err = run_training(&TrainConfig::full_batch(1e4, 200), &task, vec![adapter]).unwrap_err();
        assert!(matches!(err, MokaError::Divergence { .. }), "{err}");
    }

    #[test]
    fn same_seed_gives_identical_records() {
        let (task, adapter) = small_planted(5);
        let cfg = TrainConfig {
            eta: 0.05,
            steps: 50,
            batch: BatchMode::Sampled(8),
            seed: 99,
            record_every: 7,
        };
        let a = run_training(&cfg, &task, vec![adapter.clone()]).unwrap();
        let b = run_training(&cfg, &task, vec![adapter]).unwrap();
        let bits = |r: &[TrainRecord]| -> Vec<[u64; 4]> {
            r.iter()
                .map(|x| {
                    [
                        x.loss.to_bits(),
                        x.grad_norm_sq.to_bits(),
                        x.mean_grad_norm_sq.to_bits(),
                        x.factor_bound_term.to_bits(),
                    ]
                })
                .collect()
        };
        assert_eq!(bits(&a.records), bits(&b.records));
        // steps 0, 7, ..., 49 plus the final step
        assert_eq!(a.records.len(), 8);
        assert_eq!(a.records.last().unwrap().step, 49);
    }

    #[test]
    fn grad_norm_matches_gradient_blocks() {
        let (task, adapter) = small_planted(6);
        let cfg = TrainConfig::full_batch(0.05, 3);
        let out = run_training(&cfg, &task, vec![adapter.clone()]).unwrap();
        let (_, g) = task.loss_and_grads(&[adapter], task.full_batch()).unwrap();
        let manual: f64 = g[0]
            .d_pairs
            .iter()
            .flat_map(|p| {
                p.d_a
                    .iter()
                    .flat_map(|a| a.as_slice().iter())
                    .chain(p.d_b.as_slice().iter())
            })
            .chain(g[0].d_gate_logits.iter())
            .map(|v| v * v)
            .sum();
        assert_eq!(out.records[0].grad_norm_sq, manual);
    }

    #[test]
    fn bound_formula_examples() {
        assert!((theorem1_bound(1.0, 2.0, 3.0, 0.1, 10) - 1.3).abs() <= 1e-15);
        let e = optimal_eta(2.0, 1.0, 4.0, 8);
        assert!((e - (1.0f64 / 8.0).sqrt()).abs() <= 1e-15);
        assert!((e - 0.353553).abs() < 1e-6);
        let (gap, l, g, t) = (2.0, 1.0, 4.0, 8);
        assert!((gap / (e * t as f64) - l * e * g / 2.0).abs() <= 1e-12);
        let at_opt = theorem1_bound(gap, l, g, e, t);
        assert!((at_opt - (2.0 * l * g * gap / t as f64).sqrt()).abs() <= 1e-12);
        for k in [0.25, 0.5, 1.0, 2.0, 4.0] {
            assert!(at_opt <= theorem1_bound(gap, l, g, k * e, t));
        }
        assert!(theorem1_bound(1.0, 2.0, 3.0, 1e-12, 10) > 1e10);
    }

    #[test]
    fn bound_is_decreasing_in_t_and_convex_in_eta() {
        let (gap, l, g) = (1.7, 2.3, 0.9);
        for t in 1..50 {
            assert!(theorem1_bound(gap, l, g, 0.1, t + 1) < theorem1_bound(gap, l, g, 0.1, t));
        }
        let grid: Vec<f64> = (1..200).map(|k| k as f64 * 0.01).collect();
        for w in grid.windows(3) {
            let f = |e| theorem1_bound(gap, l, g, e, 10);
            assert!(f(w[1]) <= 0.5 * (f(w[0]) + f(w[2])) + 1e-12);
        }
    }

    #[test]
    fn zero_gradient_start_is_under_the_bound() {
        let layout = ProjectionShape {
            name: "w".into(),
            out_dim: 4,
            in_dim: 4,
            pairs: vec![PairShape::new((2, 2), (2, 2))],
        };
        let task = PlantedTask::from_target(
            MixtureAdapter::init(&layout.pairs, 4, 4, &mut stream(0, 0, 0)).unwrap(),
            7,
            16,
        )
        .unwrap();
        // The target is itself zero-initialized, so u_0 is a global minimum.
        let adapter = task.init_adapter(7).unwrap();
        let out = run_training(&TrainConfig::full_batch(0.1, 10), &task, vec![adapter]).unwrap();
        let report = convergence_diagnostic(
            &out.records,
            BoundInputs { gap: 1e-12, smoothness: 1.0, grad_bound: 1.0, eta: 0.1 },
        )
        .unwrap();
        assert!(out.mean_grad_norm_sq < 1e-20);
        assert!(!report.violated);
    }

    #[test]
    fn power_iteration_finds_top_eigenvalue() {
        let d = DenseMatrix::from_rows(&[[4.0, 1.0, 0.0], [1.0, 3.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let lambda = power_iteration(|v| d.matvec(v).unwrap(), 3, 200, 1);
        let want = 3.5 + (1.25f64).sqrt();
        assert!((lambda - want).abs() < 1e-10, "{lambda} vs {want}");
    }
}
