//! Closed-form backward pass of the gated Kronecker mixture and a central
//! finite-difference checker to verify it.
//!
//! With `x̃ = pad(x)`, `g̃ = pad(upstream)`, `X = R_{n_b,n_a}(x̃)` and
//! `G = R_{m_b,m_a}(g̃)`, each pair contributes
//!
//! ```text
//! dB_i = α_i · G · A_i · Xᵀ
//! dA_i = α_i · Gᵀ · B_i · X
//! s_i  = ⟨G · A_i, B_i · X⟩          (= ⟨upstream, apply_pair_i(x)⟩)
//! dx  += α_i · V(B_iᵀ · G · A_i)     (truncated to n)
//! ```
//!
//! and the gate logits receive `α_j (s_j − Σ_k α_k s_k)`. Zero-padding the
//! upstream gradient is the adjoint of truncating the output.

use crate::adapter::{apply_mixture, gates, GateMode, KronFactorPair, LeftFactor, MixtureAdapter};
use crate::dense::{
    matmul, matmul_nt, matmul_tn, pad_vector, reshape_vec_to_matrix, truncate_vector, vec_matrix,
    DenseMatrix, DenseVector,
};
use crate::error::{MokaError, Result};

/// Gradient of one factor pair; `d_a` is absent for identity `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    pub d_a: Option<DenseMatrix>,
    pub d_b: DenseMatrix,
}

/// Gradients of a scalar loss with respect to an adapter and its input.
///
/// When accumulated over a batch, `d_x` holds the sum of the per-example
/// input gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGradients {
    pub d_pairs: Vec<PairGradient>,
    pub d_gate_logits: Vec<f64>,
    pub d_x: DenseVector,
}

impl AdapterGradients {
    pub fn zeros_like(adapter: &MixtureAdapter) -> Self {
        let d_pairs = adapter
            .pairs()
            .iter()
            .map(|p| PairGradient {
                d_a: p.a().map(|a| DenseMatrix::zeros(a.rows(), a.cols())),
                d_b: DenseMatrix::zeros(p.b().rows(), p.b().cols()),
            })
            .collect();
        Self {
            d_pairs,
            d_gate_logits: vec![0.0; adapter.num_pairs()],
            d_x: DenseVector::zeros(adapter.in_dim()),
        }
    }

    /// `self += scale * other`.
    pub fn accumulate(&mut self, other: &AdapterGradients, scale: f64) {
        for (mine, theirs) in self.d_pairs.iter_mut().zip(&other.d_pairs) {
            if let (Some(a), Some(b)) = (mine.d_a.as_mut(), theirs.d_a.as_ref()) {
                a.add_scaled(b, scale).expect("gradient shapes agree");
            }
            mine.d_b.add_scaled(&theirs.d_b, scale).expect("gradient shapes agree");
        }
        for (g, o) in self.d_gate_logits.iter_mut().zip(&other.d_gate_logits) {
            *g += scale * o;
        }
        self.d_x.add_scaled(&other.d_x, scale);
    }

    /// Squared norm of the stacked parameter gradient (factors and gate logits).
    pub fn param_norm_sq(&self) -> f64 {
        let factors: f64 = self
            .d_pairs
            .iter()
            .map(|p| p.d_a.as_ref().map_or(0.0, DenseMatrix::norm_sq) + p.d_b.norm_sq())
            .sum();
        factors + self.d_gate_logits.iter().map(|g| g * g).sum::<f64>()
    }

    /// `Σ_i ‖∇A_i‖²‖B_i‖² + ‖A_i‖²‖∇B_i‖²`, the per-step quantity whose bound
    /// enters the SGD convergence estimate.
    pub fn factor_bound_term(&self, adapter: &MixtureAdapter) -> f64 {
        adapter
            .pairs()
            .iter()
            .zip(&self.d_pairs)
            .map(|(p, g)| {
                let a_sq = match p.left() {
                    LeftFactor::Dense(a) => a.norm_sq(),
                    LeftFactor::Identity(n) => *n as f64,
                };
                let da_sq = g.d_a.as_ref().map_or(0.0, DenseMatrix::norm_sq);
                da_sq * p.b().norm_sq() + a_sq * g.d_b.norm_sq()
            })
            .sum()
    }
}

/// Identifies one trainable block of an adapter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamBlock {
    A(usize),
    B(usize),
    Gates,
}

impl std::fmt::Display for ParamBlock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamBlock::A(i) => write!(f, "A[{i}]"),
            ParamBlock::B(i) => write!(f, "B[{i}]"),
            ParamBlock::Gates => write!(f, "gates"),
        }
    }
}

/// Trainable blocks in a fixed order: `A_0, B_0, A_1, B_1, …, gates`.
pub fn param_blocks(adapter: &MixtureAdapter) -> Vec<ParamBlock> {
    let mut out = Vec::with_capacity(2 * adapter.num_pairs() + 1);
    for (i, p) in adapter.pairs().iter().enumerate() {
        if !p.identity_a() {
            out.push(ParamBlock::A(i));
        }
        out.push(ParamBlock::B(i));
    }
    if adapter.gate_mode() == GateMode::Learned {
        out.push(ParamBlock::Gates);
    }
    out
}

pub fn block_values(adapter: &MixtureAdapter, block: ParamBlock) -> &[f64] {
    match block {
        ParamBlock::A(i) => adapter.pairs()[i].a().expect("dense A").as_slice(),
        ParamBlock::B(i) => adapter.pairs()[i].b().as_slice(),
        ParamBlock::Gates => adapter.gate_logits(),
    }
}

pub fn block_values_mut(adapter: &mut MixtureAdapter, block: ParamBlock) -> &mut [f64] {
    match block {
        ParamBlock::A(i) => adapter.pairs_mut()[i].a_mut().expect("dense A").as_mut_slice(),
        ParamBlock::B(i) => adapter.pairs_mut()[i].b_mut().as_mut_slice(),
        ParamBlock::Gates => adapter.gate_logits_mut(),
    }
}

pub fn block_grad(grads: &AdapterGradients, block: ParamBlock) -> &[f64] {
    match block {
        ParamBlock::A(i) => grads.d_pairs[i].d_a.as_ref().expect("dense dA").as_slice(),
        ParamBlock::B(i) => grads.d_pairs[i].d_b.as_slice(),
        ParamBlock::Gates => &grads.d_gate_logits,
    }
}

struct PairBackward {
    grad: PairGradient,
    /// `⟨upstream, pair output⟩` before gating.
    score: f64,
    /// `V(Bᵀ G A)`, untruncated.
    d_x_pad: DenseVector,
}

fn pair_backward(
    pair: &KronFactorPair,
    x: &DenseVector,
    upstream: &DenseVector,
    alpha: f64,
    db_scale: f64,
) -> Result<PairBackward> {
    let s = pair.shape();
    let x_mat = reshape_vec_to_matrix(&pad_vector(x, s.in_capacity())?, s.b_cols, s.a_cols)?;
    let g_mat = reshape_vec_to_matrix(&pad_vector(upstream, s.out_capacity())?, s.b_rows, s.a_rows)?;
    let b = pair.b();
    let bx = matmul(b, &x_mat)?;
    let (ga, d_a) = match pair.left() {
        LeftFactor::Dense(a) => {
            let ga = matmul(&g_mat, a)?;
            let d_a = matmul_tn(&g_mat, &bx)?.scaled(alpha);
            (ga, Some(d_a))
        }
        LeftFactor::Identity(_) => (g_mat, None),
    };
    let d_b = matmul_nt(&ga, &x_mat)?.scaled(alpha * db_scale);
    let score = ga
        .as_slice()
        .iter()
        .zip(bx.as_slice())
        .fold(0.0, |acc, (p, q)| acc + p * q);
    let d_x_pad = vec_matrix(&matmul_tn(b, &ga)?);
    Ok(PairBackward {
        grad: PairGradient { d_a, d_b },
        score,
        d_x_pad,
    })
}

fn backward_impl(
    adapter: &MixtureAdapter,
    x: &DenseVector,
    upstream: &DenseVector,
    db_scale: f64,
) -> Result<AdapterGradients> {
    let (n, m) = (adapter.in_dim(), adapter.out_dim());
    if x.len() != n {
        return Err(MokaError::LengthMismatch {
            op: "backward_mixture (x)",
            expected: n,
            got: x.len(),
        });
    }
    if upstream.len() != m {
        return Err(MokaError::LengthMismatch {
            op: "backward_mixture (upstream)",
            expected: m,
            got: upstream.len(),
        });
    }
    let alpha = gates(adapter);
    let mut d_pairs = Vec::with_capacity(adapter.num_pairs());
    let mut scores = Vec::with_capacity(adapter.num_pairs());
    let mut d_x = DenseVector::zeros(n);
    for (i, (pair, &a)) in adapter.pairs().iter().zip(&alpha).enumerate() {
        pair.check(i, n, m)?;
        let pb = pair_backward(pair, x, upstream, a, db_scale)?;
        d_x.add_scaled(&truncate_vector(&pb.d_x_pad, n)?, a);
        d_pairs.push(pb.grad);
        scores.push(pb.score);
    }
    let d_gate_logits = match adapter.gate_mode() {
        GateMode::Learned => {
            let mean: f64 = alpha.iter().zip(&scores).map(|(a, s)| a * s).sum();
            alpha.iter().zip(&scores).map(|(a, s)| a * (s - mean)).collect()
        }
        GateMode::Uniform => vec![0.0; adapter.num_pairs()],
    };
    Ok(AdapterGradients {
        d_pairs,
        d_gate_logits,
        d_x,
    })
}

/// Gradients of `⟨upstream, apply_mixture(adapter, x)⟩` with respect to every
/// factor, the gate logits and `x`.
pub fn backward_mixture(
    adapter: &MixtureAdapter,
    x: &DenseVector,
    upstream: &DenseVector,
) -> Result<AdapterGradients> {
    backward_impl(adapter, x, upstream, 1.0)
}

/// [`backward_mixture`] with every `dB_i` scaled by `1 + fault`. Exists so the
/// verification harness can prove it catches a wrong gradient.
#[doc(hidden)]
pub fn backward_mixture_with_fault(
    adapter: &MixtureAdapter,
    x: &DenseVector,
    upstream: &DenseVector,
    fault: f64,
) -> Result<AdapterGradients> {
    backward_impl(adapter, x, upstream, 1.0 + fault)
}

/// Scalar loss of the adapter output together with its gradient.
pub trait OutputLoss {
    fn value(&self, y: &DenseVector) -> f64;
    fn gradient(&self, y: &DenseVector) -> DenseVector;
}

/// `½‖y‖²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct HalfSquaredNorm;

impl OutputLoss for HalfSquaredNorm {
    fn value(&self, y: &DenseVector) -> f64 {
        0.5 * y.norm_sq()
    }

    fn gradient(&self, y: &DenseVector) -> DenseVector {
        y.clone()
    }
}

/// `⟨c, y⟩`.
#[derive(Debug, Clone)]
pub struct LinearLoss(pub DenseVector);

impl OutputLoss for LinearLoss {
    fn value(&self, y: &DenseVector) -> f64 {
        self.0.dot(y)
    }

    fn gradient(&self, _y: &DenseVector) -> DenseVector {
        self.0.clone()
    }
}

/// `¼ Σ y_i⁴`; curved enough that central differences show truncation error.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuarticLoss;

impl OutputLoss for QuarticLoss {
    fn value(&self, y: &DenseVector) -> f64 {
        0.25 * y.as_slice().iter().map(|v| v.powi(4)).sum::<f64>()
    }

    fn gradient(&self, y: &DenseVector) -> DenseVector {
        let mut g = y.clone();
        for v in g.as_mut_slice() {
            *v = v.powi(3);
        }
        g
    }
}

pub const DEFAULT_FD_EPS: f64 = 1e-5;
const REL_FLOOR: f64 = 1e-8;

/// Analytic-vs-numeric agreement for one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub name: String,
    pub entries: usize,
    pub max_abs_diff: f64,
    /// `max|a − f| / max(max|a|, max|f|, 1e-8)` over the block.
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub eps: f64,
    pub blocks: Vec<BlockError>,
}

impl FdReport {
    pub fn worst(&self) -> f64 {
        self.blocks.iter().map(|b| b.rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.worst() <= tol
    }

    pub fn block(&self, name: &str) -> Option<&BlockError> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

pub fn compare_block(name: impl Into<String>, analytic: &[f64], numeric: &[f64]) -> BlockError {
    assert_eq!(analytic.len(), numeric.len());
    let mut max_abs_diff = 0.0_f64;
    let mut scale = REL_FLOOR;
    for (a, f) in analytic.iter().zip(numeric) {
        max_abs_diff = max_abs_diff.max((a - f).abs());
        scale = scale.max(a.abs()).max(f.abs());
    }
    BlockError {
        name: name.into(),
        entries: analytic.len(),
        max_abs_diff,
        rel_error: max_abs_diff / scale,
    }
}

/// Central differences of `loss` over every trainable scalar of every adapter,
/// compared block by block against `analytic`.
pub fn check_param_gradients<F>(
    adapters: &[MixtureAdapter],
    analytic: &[AdapterGradients],
    mut loss: F,
    eps: f64,
) -> Result<FdReport>
where
    F: FnMut(&[MixtureAdapter]) -> Result<f64>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(MokaError::Config(format!("eps must be positive, got {eps}")));
    }
    let mut work = adapters.to_vec();
    let mut blocks = Vec::new();
    for (k, adapter) in adapters.iter().enumerate() {
        for block in param_blocks(adapter) {
            let len = block_values(adapter, block).len();
            let mut numeric = Vec::with_capacity(len);
            for j in 0..len {
                let orig = block_values(&work[k], block)[j];
                block_values_mut(&mut work[k], block)[j] = orig + eps;
                let plus = loss(&work)?;
                block_values_mut(&mut work[k], block)[j] = orig - eps;
                let minus = loss(&work)?;
                block_values_mut(&mut work[k], block)[j] = orig;
                numeric.push((plus - minus) / (2.0 * eps));
            }
            let name = if adapters.len() == 1 {
                block.to_string()
            } else {
                format!("{k}:{block}")
            };
            blocks.push(compare_block(name, block_grad(&analytic[k], block), &numeric));
        }
    }
    Ok(FdReport { eps, blocks })
}

/// Options for [`finite_difference_check_with`].
#[derive(Debug, Clone, Copy)]
pub struct FdOptions {
    pub eps: f64,
    /// Relative perturbation injected into `dB` (zero for a faithful check).
    pub fault: f64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            eps: DEFAULT_FD_EPS,
            fault: 0.0,
        }
    }
}

/// Checks [`backward_mixture`] against central differences of
/// `loss(apply_mixture(adapter, x))` for every factor, the gates and `x`.
pub fn finite_difference_check(
    adapter: &MixtureAdapter,
    x: &DenseVector,
    loss: &dyn OutputLoss,
    eps: f64,
) -> Result<FdReport> {
    finite_difference_check_with(adapter, x, loss, FdOptions { eps, fault: 0.0 })
}

pub fn finite_difference_check_with(
    adapter: &MixtureAdapter,
    x: &DenseVector,
    loss: &dyn OutputLoss,
    opts: FdOptions,
) -> Result<FdReport> {
    let y = apply_mixture(adapter, x)?;
    let upstream = loss.gradient(&y);
    let analytic = backward_impl(adapter, x, &upstream, 1.0 + opts.fault)?;

    let mut report = check_param_gradients(
        std::slice::from_ref(adapter),
        std::slice::from_ref(&analytic),
        |ad| Ok(loss.value(&apply_mixture(&ad[0], x)?)),
        opts.eps,
    )?;

    let mut xw = x.clone();
    let mut numeric = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let orig = xw[j];
        xw[j] = orig + opts.eps;
        let plus = loss.value(&apply_mixture(adapter, &xw)?);
        xw[j] = orig - opts.eps;
        let minus = loss.value(&apply_mixture(adapter, &xw)?);
        xw[j] = orig;
        numeric.push((plus - minus) / (2.0 * opts.eps));
    }
    report
        .blocks
        .push(compare_block("x", analytic.d_x.as_slice(), &numeric));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{materialize_delta, KronFactorPair};
    use crate::rng::{normal_vector, stream};
    use crate::sample::random_adapter;

    fn scalar(v: f64) -> DenseMatrix {
        DenseMatrix::from_vec(1, 1, vec![v]).unwrap()
    }

    fn one(v: f64) -> DenseVector {
        DenseVector::from_vec(vec![v]).unwrap()
    }

    #[test]
    fn scalar_chain_rule() {
        let adapter =
            MixtureAdapter::new(vec![KronFactorPair::new(scalar(2.0), scalar(3.0))], vec![0.0], 1, 1)
                .unwrap();
        let g = backward_mixture(&adapter, &one(5.0), &one(1.0)).unwrap();
        assert_eq!(g.d_pairs[0].d_a.as_ref().unwrap()[(0, 0)], 15.0);
        assert_eq!(g.d_pairs[0].d_b[(0, 0)], 10.0);
        assert_eq!(g.d_x[0], 6.0);
        assert_eq!(g.d_gate_logits, vec![0.0]);
    }

    #[test]
    fn zero_b_kills_da_and_dx() {
        let mut rng = stream(3, 0, 0);
        let mut adapter = random_adapter(&mut rng, 3, 6, false);
        for p in adapter.pairs_mut() {
            for v in p.b_mut().as_mut_slice() {
                *v = 0.0;
            }
        }
        let x = normal_vector(&mut rng, adapter.in_dim(), 1.0);
        let up = normal_vector(&mut rng, adapter.out_dim(), 1.0);
        let g = backward_mixture(&adapter, &x, &up).unwrap();
        for pg in &g.d_pairs {
            assert!(pg.d_a.as_ref().unwrap().as_slice().iter().all(|v| *v == 0.0));
        }
        assert!(g.d_x.as_slice().iter().all(|v| *v == 0.0));
        assert!(g.d_pairs.iter().any(|pg| pg.d_b.norm_sq() > 0.0));
    }

    #[test]
    fn zero_upstream_gives_exact_zeros() {
        let mut rng = stream(4, 0, 0);
        let adapter = random_adapter(&mut rng, 3, 6, true);
        let x = normal_vector(&mut rng, adapter.in_dim(), 1.0);
        let g = backward_mixture(&adapter, &x, &DenseVector::zeros(adapter.out_dim())).unwrap();
        assert_eq!(g.param_norm_sq(), 0.0);
        assert_eq!(g.d_x.norm_sq(), 0.0);
    }

    #[test]
    fn identity_pairs_report_no_da() {
        let b = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let adapter = MixtureAdapter::new(vec![KronFactorPair::with_identity(3, b)], vec![0.0], 6, 6).unwrap();
        let x = DenseVector::from_vec(vec![1.0; 6]).unwrap();
        let g = backward_mixture(&adapter, &x, &x).unwrap();
        assert!(g.d_pairs[0].d_a.is_none());
        assert_eq!(param_blocks(&adapter), vec![ParamBlock::B(0), ParamBlock::Gates]);
    }

    #[test]
    fn random_instances_match_central_differences() {
        for seed in 0..20 {
            let mut rng = stream(seed, 9, 0);
            let adapter = random_adapter(&mut rng, 3, 8, true);
            let x = normal_vector(&mut rng, adapter.in_dim(), 1.0);
            let target = normal_vector(&mut rng, adapter.out_dim(), 1.0);
            let report =
                finite_difference_check(&adapter, &x, &LinearLoss(target), DEFAULT_FD_EPS).unwrap();
            assert!(report.passes(1e-5), "seed {seed}: {report:?}");
            let report =
                finite_difference_check(&adapter, &x, &HalfSquaredNorm, DEFAULT_FD_EPS).unwrap();
            assert!(report.passes(1e-5), "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn identity_adapter_quadratic_loss() {
        let adapter = MixtureAdapter::new(
            vec![KronFactorPair::new(DenseMatrix::identity(2), DenseMatrix::identity(3))],
            vec![0.0],
            6,
            6,
        )
        .unwrap();
        let x = DenseVector::from_vec(vec![0.5, -1.0, 2.0, 0.0, 1.5, -0.25]).unwrap();
        let y = apply_mixture(&adapter, &x).unwrap();
        let g = backward_mixture(&adapter, &x, &y).unwrap();
        assert!(g.d_x.max_abs_diff(&y) <= 1e-15);
        let report = finite_difference_check(&adapter, &x, &HalfSquaredNorm, DEFAULT_FD_EPS).unwrap();
        assert!(report.passes(1e-7), "{report:?}");
    }

    #[test]
    fn gate_gradient_under_linear_loss() {
        let mut rng = stream(14, 0, 0);
        let adapter = random_adapter(&mut rng, 2, 5, false);
        let c = normal_vector(&mut rng, adapter.out_dim(), 1.0);
        let x = normal_vector(&mut rng, adapter.in_dim(), 1.0);
        let report = finite_difference_check(&adapter, &x, &LinearLoss(c), DEFAULT_FD_EPS).unwrap();
        assert!(report.block("gates").unwrap().rel_error <= 1e-6, "{report:?}");
    }

    #[test]
    fn eps_sweep_has_an_interior_minimum_below_tolerance() {
        let mut rng = stream(15, 0, 0);
        let adapter = random_adapter(&mut rng, 2, 5, false);
        let x = normal_vector(&mut rng, adapter.in_dim(), 2.0);
        let errs: Vec<f64> = [1e-4, 1e-5, 1e-6]
            .iter()
            .map(|&eps| finite_difference_check(&adapter, &x, &QuarticLoss, eps).unwrap().worst())
            .collect();
        let min = errs.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min <= 1e-6, "{errs:?}");
        // Truncation error dominates at the large step.
        assert!(errs[0] > errs[1], "{errs:?}");
    }

    #[test]
    fn gate_gradients_sum_to_zero() {
        for seed in 0..20 {
            let mut rng = stream(seed, 10, 0);
            let adapter = random_adapter(&mut rng, 4, 6, true);
            let x = normal_vector(&mut rng, adapter.in_dim(), 1.0);
            let up = normal_vector(&mut rng, adapter.out_dim(), 1.0);
            let g = backward_mixture(&adapter, &x, &up).unwrap();
            assert!(g.d_gate_logits.iter().sum::<f64>().abs() <= 1e-10);
        }
    }

    #[test]
    fn input_gradient_is_transposed_delta() {
        for seed in 0..20 {
            let mut rng = stream(seed, 11, 0);
            let adapter = random_adapter(&mut rng, 3, 6, true);
            let x = normal_vector(&mut rng, adapter.in_dim(), 1.0);
            let up = normal_vector(&mut rng, adapter.out_dim(), 1.0);
            let g = backward_mixture(&adapter, &x, &up).unwrap();
            let want = materialize_delta(&adapter).unwrap().matvec_transposed(&up).unwrap();
            assert!(g.d_x.max_abs_diff(&want) <= 1e-10);
        }
    }

    #[test]
    fn injected_fault_is_detected() {
        let mut rng = stream(16, 0, 0);
        let adapter = random_adapter(&mut rng, 2, 5, false);
        let x = normal_vector(&mut rng, adapter.in_dim(), 1.0);
        let report = finite_difference_check_with(
            &adapter,
            &x,
            &HalfSquaredNorm,
            FdOptions { eps: DEFAULT_FD_EPS, fault: 1e-3 },
        )
        .unwrap();
        assert!(!report.passes(1e-5));
    }

    #[test]
    fn shape_errors_propagate() {
        let mut rng = stream(17, 0, 0);
        let adapter = random_adapter(&mut rng, 2, 5, false);
        let x = DenseVector::zeros(adapter.in_dim() + 1);
        let up = DenseVector::zeros(adapter.out_dim());
        assert!(backward_mixture(&adapter, &x, &up).is_err());
        let x = DenseVector::zeros(adapter.in_dim());
        let up = DenseVector::zeros(adapter.out_dim() + 1);
        assert!(backward_mixture(&adapter, &x, &up).is_err());
    }
}
