//! Synthetic adaptation tasks.
//!
//! * [`PlantedTask`]: regress onto a target update that is itself a gated
//!   Kronecker mixture of the adapter's shape, so the minimum loss is zero.
//! * [`FrozenLinearTask`]: adapt a frozen random layer towards the layer plus
//!   a dense perturbation that the adapter generally cannot represent.
//! * [`ToyAttentionTask`]: a single-head attention block with adapters on the
//!   query and value projections, regressing onto a teacher block.
//!
//! Every constructor is a pure function of its parameters and seed.

use crate::adapter::{adapted_forward, apply_mixture, materialize_delta_capped, MixtureAdapter, PairShape};
use crate::dense::{DenseMatrix, DenseVector, DEFAULT_EXPLICIT_CAP};
use crate::error::{MokaError, Result};
use crate::grad::{backward_mixture, check_param_gradients, AdapterGradients, FdReport};
use crate::rng::{normal_matrix, normal_vector, stream, streams, Rng};
use crate::sample::adapter_from_shapes;
use crate::shapes::ProjectionShape;
use crate::trainer::{power_iteration, Objective};

/// Default number of fixed probes in a full batch.
pub const DEFAULT_PROBES: usize = 32;

/// Input vectors for the linear regression tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeBatch {
    pub inputs: Vec<DenseVector>,
}

impl ProbeBatch {
    pub fn gaussian(rng: &mut Rng, count: usize, dim: usize) -> Self {
        Self {
            inputs: (0..count).map(|_| normal_vector(rng, dim, 1.0)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Largest eigenvalue of `(1/B) Σ x xᵀ`.
    pub fn covariance_top_eigenvalue(&self, seed: u64) -> f64 {
        let dim = self.inputs[0].len();
        let scale = 1.0 / self.len() as f64;
        power_iteration(
            |v| {
                let mut out = DenseVector::zeros(dim);
                for x in &self.inputs {
                    out.add_scaled(x, scale * x.dot(v));
                }
                out
            },
            dim,
            500,
            seed,
        )
    }
}

fn check_single(adapters: &[MixtureAdapter], m: usize, n: usize) -> Result<&MixtureAdapter> {
    match adapters {
        [a] if a.out_dim() == m && a.in_dim() == n => Ok(a),
        [a] => Err(MokaError::ShapeMismatch {
            op: "task adapter",
            lhs: crate::error::Shape(a.out_dim(), a.in_dim()),
            rhs: crate::error::Shape(m, n),
        }),
        _ => Err(MokaError::LengthMismatch {
            op: "task adapters",
            expected: 1,
            got: adapters.len(),
        }),
    }
}

/// Mean over the batch of `½‖predict(x) − target·x‖²` and its gradients.
fn regression<P>(
    adapter: &MixtureAdapter,
    target: &DenseMatrix,
    batch: &ProbeBatch,
    predict: P,
    want_grads: bool,
) -> Result<(f64, Option<AdapterGradients>)>
where
    P: Fn(&DenseVector) -> Result<DenseVector>,
{
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = want_grads.then(|| AdapterGradients::zeros_like(adapter));
    for x in &batch.inputs {
        let residual = predict(x)?.sub(&target.matvec(x)?);
        loss += 0.5 * residual.norm_sq();
        if let Some(g) = grads.as_mut() {
            g.accumulate(&backward_mixture(adapter, x, &residual)?, scale);
        }
    }
    Ok((loss * scale, grads))
}

/// Regression onto a planted gated Kronecker mixture.
#[derive(Debug, Clone)]
pub struct PlantedTask {
    target: MixtureAdapter,
    target_delta: DenseMatrix,
    probes: ProbeBatch,
    seed: u64,
}

/// Draws target factors (std `1/√cols`) and gate logits in `[-1, 1]` from the
/// task stream, plus `probes` fixed Gaussian inputs.
pub fn make_planted(layout: &ProjectionShape, seed: u64, probes: usize) -> Result<PlantedTask> {
    for (i, pair) in layout.pairs.iter().enumerate() {
        if let Some(reason) = pair.violations(layout.out_dim, layout.in_dim).into_iter().next() {
            return Err(MokaError::PairShape { index: i, reason });
        }
    }
    if layout.pairs.is_empty() {
        return Err(MokaError::Config("planted task needs at least one pair".into()));
    }
    let mut rng = stream(seed, streams::TASK, 0);
    let target = adapter_from_shapes(&mut rng, &layout.pairs, layout.out_dim, layout.in_dim);
    PlantedTask::from_target(target, seed, probes)
}

impl PlantedTask {
    /// Task whose target is the given adapter.
    pub fn from_target(target: MixtureAdapter, seed: u64, probes: usize) -> Result<Self> {
        if probes == 0 {
            return Err(MokaError::Config("probe count must be at least 1".into()));
        }
        let target_delta = materialize_delta_capped(&target, DEFAULT_EXPLICIT_CAP)?;
        let mut rng = stream(seed, streams::PROBE, 0);
        let probes = ProbeBatch::gaussian(&mut rng, probes, target.in_dim());
        Ok(Self {
            target,
            target_delta,
            probes,
            seed,
        })
    }

    pub fn target(&self) -> &MixtureAdapter {
        &self.target
    }

    pub fn target_delta(&self) -> &DenseMatrix {
        &self.target_delta
    }

    /// Zero-update student with the target's shapes.
    pub fn init_adapter(&self, seed: u64) -> Result<MixtureAdapter> {
        MixtureAdapter::init(
            &self.target.shapes(),
            self.target.out_dim(),
            self.target.in_dim(),
            &mut stream(seed, streams::INIT, 0),
        )
    }
}

impl Objective for PlantedTask {
    type Batch = ProbeBatch;

    fn full_batch(&self) -> &ProbeBatch {
        &self.probes
    }

    fn sample_batch(&self, rng: &mut Rng, size: usize) -> ProbeBatch {
        ProbeBatch::gaussian(rng, size, self.target.in_dim())
    }

    fn loss(&self, adapters: &[MixtureAdapter], batch: &ProbeBatch) -> Result<f64> {
        let a = check_single(adapters, self.target.out_dim(), self.target.in_dim())?;
        Ok(regression(a, &self.target_delta, batch, |x| apply_mixture(a, x), false)?.0)
    }

    fn loss_and_grads(
        &self,
        adapters: &[MixtureAdapter],
        batch: &ProbeBatch,
    ) -> Result<(f64, Vec<AdapterGradients>)> {
        let a = check_single(adapters, self.target.out_dim(), self.target.in_dim())?;
        let (loss, g) = regression(a, &self.target_delta, batch, |x| apply_mixture(a, x), true)?;
        Ok((loss, vec![g.expect("gradients requested")]))
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.probes.covariance_top_eigenvalue(self.seed))
    }

    fn known_min(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Adapts a frozen random layer towards `w_frozen + P` with `‖P‖_F = ρ`.
#[derive(Debug, Clone)]
pub struct FrozenLinearTask {
    w_frozen: DenseMatrix,
    target_map: DenseMatrix,
    probes: ProbeBatch,
    seed: u64,
}

pub fn make_frozen_linear(m: usize, n: usize, rho: f64, seed: u64, probes: usize) -> Result<FrozenLinearTask> {
    if m == 0 || n == 0 {
        return Err(MokaError::ZeroDimension("frozen linear layer"));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(MokaError::Config(format!("rho must be non-negative, got {rho}")));
    }
    if probes == 0 {
        return Err(MokaError::Config("probe count must be at least 1".into()));
    }
    let mut rng = stream(seed, streams::TASK, 0);
    let w_frozen = normal_matrix(&mut rng, m, n, 1.0 / (n as f64).sqrt());
    let mut target_map = w_frozen.clone();
    if rho > 0.0 {
        let p = normal_matrix(&mut rng, m, n, 1.0);
        let norm = p.norm_sq().sqrt();
        target_map.add_scaled(&p, rho / norm)?;
    }
    let mut rng = stream(seed, streams::PROBE, 0);
    Ok(FrozenLinearTask {
        w_frozen,
        target_map,
        probes: ProbeBatch::gaussian(&mut rng, probes, n),
        seed,
    })
}

impl FrozenLinearTask {
    pub fn w_frozen(&self) -> &DenseMatrix {
        &self.w_frozen
    }

    pub fn target_map(&self) -> &DenseMatrix {
        &self.target_map
    }

    pub fn init_adapter(&self, shapes: &[PairShape], seed: u64) -> Result<MixtureAdapter> {
        MixtureAdapter::init(
            shapes,
            self.w_frozen.rows(),
            self.w_frozen.cols(),
            &mut stream(seed, streams::INIT, 0),
        )
    }
}

impl Objective for FrozenLinearTask {
    type Batch = ProbeBatch;

    fn full_batch(&self) -> &ProbeBatch {
        &self.probes
    }

    fn sample_batch(&self, rng: &mut Rng, size: usize) -> ProbeBatch {
        ProbeBatch::gaussian(rng, size, self.w_frozen.cols())
    }

    fn loss(&self, adapters: &[MixtureAdapter], batch: &ProbeBatch) -> Result<f64> {
        let a = check_single(adapters, self.w_frozen.rows(), self.w_frozen.cols())?;
        let predict = |x: &DenseVector| adapted_forward(&self.w_frozen, a, x);
        Ok(regression(a, &self.target_map, batch, predict, false)?.0)
    }

    fn loss_and_grads(
        &self,
        adapters: &[MixtureAdapter],
        batch: &ProbeBatch,
    ) -> Result<(f64, Vec<AdapterGradients>)> {
        let a = check_single(adapters, self.w_frozen.rows(), self.w_frozen.cols())?;
        let predict = |x: &DenseVector| adapted_forward(&self.w_frozen, a, x);
        let (loss, g) = regression(a, &self.target_map, batch, predict, true)?;
        Ok((loss, vec![g.expect("gradients requested")]))
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.probes.covariance_top_eigenvalue(self.seed))
    }
}

/// One input sequence (`s` tokens of width `d`) and its regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub tokens: Vec<DenseVector>,
    pub target: Vec<DenseVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub sequences: Vec<Sequence>,
}

/// Intermediate values of one attention forward pass.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub q: Vec<DenseVector>,
    pub k: Vec<DenseVector>,
    pub v: Vec<DenseVector>,
    /// Row-stochastic `s × s` attention weights.
    pub weights: DenseMatrix,
    pub mixed: Vec<DenseVector>,
    pub output: Vec<DenseVector>,
}

/// Single-head attention without masking or normalization:
/// `softmax(Q Kᵀ/√d) V W_oᵀ` with `Q`, `V` from adapted projections.
///
/// The adapter slice is ordered `[query, value]`.
#[derive(Debug, Clone)]
pub struct ToyAttentionTask {
    seq_len: usize,
    dim: usize,
    w_q: DenseMatrix,
    w_k: DenseMatrix,
    w_v: DenseMatrix,
    w_o: DenseMatrix,
    teacher: [MixtureAdapter; 2],
    q_shapes: Vec<PairShape>,
    v_shapes: Vec<PairShape>,
    pool: SequenceBatch,
}

/// Index of the query adapter in the adapter slice.
pub const QUERY: usize = 0;
/// Index of the value adapter in the adapter slice.
pub const VALUE: usize = 1;

pub fn make_toy_attention(
    seq_len: usize,
    dim: usize,
    q_shapes: &[PairShape],
    v_shapes: &[PairShape],
    seed: u64,
    pool: usize,
) -> Result<ToyAttentionTask> {
    if seq_len == 0 || dim == 0 {
        return Err(MokaError::ZeroDimension("attention block"));
    }
    if pool == 0 {
        return Err(MokaError::Config("sequence pool must be non-empty".into()));
    }
    for shapes in [q_shapes, v_shapes] {
        if shapes.is_empty() {
            return Err(MokaError::Config("attention adapters need at least one pair".into()));
        }
        for (i, pair) in shapes.iter().enumerate() {
            if let Some(reason) = pair.violations(dim, dim).into_iter().next() {
                return Err(MokaError::PairShape { index: i, reason });
            }
        }
    }
    let mut rng = stream(seed, streams::TASK, 0);
    let std = 1.0 / (dim as f64).sqrt();
    let w_q = normal_matrix(&mut rng, dim, dim, std);
    let w_k = normal_matrix(&mut rng, dim, dim, std);
    let w_v = normal_matrix(&mut rng, dim, dim, std);
    let w_o = normal_matrix(&mut rng, dim, dim, std);
    let teacher = [
        adapter_from_shapes(&mut rng, q_shapes, dim, dim),
        adapter_from_shapes(&mut rng, v_shapes, dim, dim),
    ];
    let mut task = ToyAttentionTask {
        seq_len,
        dim,
        w_q,
        w_k,
        w_v,
        w_o,
        teacher,
        q_shapes: q_shapes.to_vec(),
        v_shapes: v_shapes.to_vec(),
        pool: SequenceBatch { sequences: Vec::new() },
    };
    let mut rng = stream(seed, streams::PROBE, 0);
    task.pool = task.sample_sequences(&mut rng, pool)?;
    Ok(task)
}

impl ToyAttentionTask {
    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn teacher(&self) -> &[MixtureAdapter] {
        &self.teacher
    }

    /// Zero-update `[query, value]` adapters.
    pub fn init_adapters(&self, seed: u64) -> Result<Vec<MixtureAdapter>> {
        Ok(vec![
            MixtureAdapter::init(&self.q_shapes, self.dim, self.dim, &mut stream(seed, streams::INIT, 0))?,
            MixtureAdapter::init(&self.v_shapes, self.dim, self.dim, &mut stream(seed, streams::INIT, 1))?,
        ])
    }

    fn sample_sequences(&self, rng: &mut Rng, count: usize) -> Result<SequenceBatch> {
        let mut sequences = Vec::with_capacity(count);
        for _ in 0..count {
            let tokens: Vec<DenseVector> =
                (0..self.seq_len).map(|_| normal_vector(rng, self.dim, 1.0)).collect();
            let target = self.forward(Some(&self.teacher), &tokens)?.output;
            sequences.push(Sequence { tokens, target });
        }
        Ok(SequenceBatch { sequences })
    }

    /// Forward pass; `None` runs the frozen block with no adapters at all.
    pub fn forward(&self, adapters: Option<&[MixtureAdapter]>, tokens: &[DenseVector]) -> Result<AttentionTrace> {
        let project = |w: &DenseMatrix, slot: usize, x: &DenseVector| match adapters {
            Some(a) => adapted_forward(w, &a[slot], x),
            None => w.matvec(x),
        };
        if let Some(a) = adapters {
            if a.len() != 2 {
                return Err(MokaError::LengthMismatch {
                    op: "attention adapters",
                    expected: 2,
                    got: a.len(),
                });
            }
        }
        let mut q = Vec::with_capacity(tokens.len());
        let mut k = Vec::with_capacity(tokens.len());
        let mut v = Vec::with_capacity(tokens.len());
        for x in tokens {
            q.push(project(&self.w_q, QUERY, x)?);
            k.push(self.w_k.matvec(x)?);
            v.push(project(&self.w_v, VALUE, x)?);
        }
        let s = tokens.len();
        let inv_sqrt_d = 1.0 / (self.dim as f64).sqrt();
        let mut weights = DenseMatrix::zeros(s, s);
        let mut mixed = Vec::with_capacity(s);
        let mut output = Vec::with_capacity(s);
        for t in 0..s {
            let logits: Vec<f64> = k.iter().map(|ku| q[t].dot(ku) * inv_sqrt_d).collect();
            let p = crate::adapter::softmax(&logits);
            let mut h = DenseVector::zeros(self.dim);
            for (u, pu) in p.iter().enumerate() {
                weights[(t, u)] = *pu;
                h.add_scaled(&v[u], *pu);
            }
            output.push(self.w_o.matvec(&h)?);
            mixed.push(h);
        }
        Ok(AttentionTrace {
            q,
            k,
            v,
            weights,
            mixed,
            output,
        })
    }

    fn sequence_loss(&self, output: &[DenseVector], target: &[DenseVector]) -> f64 {
        let sum: f64 = output.iter().zip(target).map(|(o, y)| o.sub(y).norm_sq()).sum();
        0.5 * sum / self.seq_len as f64
    }

    /// Gradients of `scale · sequence_loss` for the query and value adapters.
    fn sequence_backward(
        &self,
        adapters: &[MixtureAdapter],
        seq: &Sequence,
        trace: &AttentionTrace,
        scale: f64,
        grads: &mut [AdapterGradients],
    ) -> Result<()> {
        let s = seq.tokens.len();
        let inv_sqrt_d = 1.0 / (self.dim as f64).sqrt();
        let coef = scale / self.seq_len as f64;
        let mut d_q = vec![DenseVector::zeros(self.dim); s];
        let mut d_v = vec![DenseVector::zeros(self.dim); s];
        for (t, dq) in d_q.iter_mut().enumerate() {
            let d_out = trace.output[t].sub(&seq.target[t]).scaled(coef);
            let d_h = self.w_o.matvec_transposed(&d_out)?;
            let d_p: Vec<f64> = trace.v.iter().map(|vu| d_h.dot(vu)).collect();
            let mean: f64 = (0..s).map(|u| trace.weights[(t, u)] * d_p[u]).sum();
            for u in 0..s {
                let p = trace.weights[(t, u)];
                d_v[u].add_scaled(&d_h, p);
                let d_logit = p * (d_p[u] - mean);
                dq.add_scaled(&trace.k[u], d_logit * inv_sqrt_d);
            }
        }
        for (x, (dq, dv)) in seq.tokens.iter().zip(d_q.iter().zip(&d_v)) {
            grads[QUERY].accumulate(&backward_mixture(&adapters[QUERY], x, dq)?, 1.0);
            grads[VALUE].accumulate(&backward_mixture(&adapters[VALUE], x, dv)?, 1.0);
        }
        Ok(())
    }

    /// Central-difference check of the adapter gradients through the block.
    pub fn gradient_check(&self, adapters: &[MixtureAdapter], batch: &SequenceBatch, eps: f64) -> Result<FdReport> {
        let (_, analytic) = self.loss_and_grads(adapters, batch)?;
        check_param_gradients(adapters, &analytic, |a| self.loss(a, batch), eps)
    }
}

impl Objective for ToyAttentionTask {
    type Batch = SequenceBatch;

    fn full_batch(&self) -> &SequenceBatch {
        &self.pool
    }

    fn sample_batch(&self, rng: &mut Rng, size: usize) -> SequenceBatch {
        self.sample_sequences(rng, size)
            .expect("teacher adapters match the block by construction")
    }

    fn loss(&self, adapters: &[MixtureAdapter], batch: &SequenceBatch) -> Result<f64> {
        let mut total = 0.0;
        for seq in &batch.sequences {
            let trace = self.forward(Some(adapters), &seq.tokens)?;
            total += self.sequence_loss(&trace.output, &seq.target);
        }
        Ok(total / batch.sequences.len() as f64)
    }

    fn loss_and_grads(
        &self,
        adapters: &[MixtureAdapter],
        batch: &SequenceBatch,
    ) -> Result<(f64, Vec<AdapterGradients>)> {
        let mut grads: Vec<AdapterGradients> = adapters.iter().map(AdapterGradients::zeros_like).collect();
        let scale = 1.0 / batch.sequences.len() as f64;
        let mut total = 0.0;
        for seq in &batch.sequences {
            let trace = self.forward(Some(adapters), &seq.tokens)?;
            total += self.sequence_loss(&trace.output, &seq.target);
            self.sequence_backward(adapters, seq, &trace, scale, &mut grads)?;
        }
        Ok((total * scale, grads))
    }
}

/// Task descriptor as it appears in run configurations.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskSpec {
    Planted {
        layout: ProjectionShape,
        probes: usize,
    },
    FrozenLinear {
        layout: ProjectionShape,
        rho: f64,
        probes: usize,
    },
    ToyAttention {
        seq_len: usize,
        dim: usize,
        q_pairs: Vec<PairShape>,
        v_pairs: Vec<PairShape>,
        pool: usize,
    },
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::Planted { .. } => "planted",
            TaskSpec::FrozenLinear { .. } => "frozen_linear",
            TaskSpec::ToyAttention { .. } => "toy_attention",
        }
    }
}
