//! Kronecker factor pairs and their softmax-gated mixture.
//!
//! A pair `(A, B)` with `A: m_a × n_a` and `B: m_b × n_b` acts on an input of
//! length `n ≤ n_a·n_b` by zero-padding it to `n_a·n_b`, reshaping it
//! column-major into `X: n_b × n_a`, forming `B · X · Aᵀ` and stacking the
//! columns back into a vector of length `m_a·m_b`, of which the first `m`
//! entries are kept. This equals `(A ⊗ B) · pad(x)` truncated to `m` without
//! ever forming the Kronecker product.

use crate::dense::{
    matmul, matmul_nt, pad_vector, reshape_vec_to_matrix, truncate_vector, vec_matrix, DenseMatrix,
    DenseVector, DEFAULT_EXPLICIT_CAP,
};
use crate::error::{MokaError, Result, Shape};
use crate::rng::{normal_matrix, Rng};

/// Dimensions of one factor pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairShape {
    pub a_rows: usize,
    pub a_cols: usize,
    pub b_rows: usize,
    pub b_cols: usize,
    /// `A` is the implicit identity `I_{a_cols}` and carries no parameters.
    pub identity_a: bool,
}

impl PairShape {
    pub fn new(a: (usize, usize), b: (usize, usize)) -> Self {
        Self {
            a_rows: a.0,
            a_cols: a.1,
            b_rows: b.0,
            b_cols: b.1,
            identity_a: false,
        }
    }

    pub fn identity(n_a: usize, b: (usize, usize)) -> Self {
        Self {
            a_rows: n_a,
            a_cols: n_a,
            b_rows: b.0,
            b_cols: b.1,
            identity_a: true,
        }
    }

    /// `n_a · n_b`, the padded input length.
    pub fn in_capacity(&self) -> usize {
        self.a_cols * self.b_cols
    }

    /// `m_a · m_b`, the untruncated output length.
    pub fn out_capacity(&self) -> usize {
        self.a_rows * self.b_rows
    }

    pub fn trainable_params(&self) -> usize {
        let a = if self.identity_a {
            0
        } else {
            self.a_rows * self.a_cols
        };
        a + self.b_rows * self.b_cols
    }

    /// Every way this shape fails to serve an `m × n` layer.
    pub fn violations(&self, m: usize, n: usize) -> Vec<String> {
        let mut out = Vec::new();
        if [self.a_rows, self.a_cols, self.b_rows, self.b_cols].contains(&0) {
            out.push("factor dimensions must be positive".to_string());
            return out;
        }
        if self.identity_a && self.a_rows != self.a_cols {
            out.push(format!(
                "identity A must be square, got {}x{}",
                self.a_rows, self.a_cols
            ));
        }
        if self.in_capacity() < n {
            out.push(format!(
                "n_a*n_b = {}*{} = {} < n = {}",
                self.a_cols,
                self.b_cols,
                self.in_capacity(),
                n
            ));
        }
        if self.out_capacity() < m {
            out.push(format!(
                "m_a*m_b = {}*{} = {} < m = {}",
                self.a_rows,
                self.b_rows,
                self.out_capacity(),
                m
            ));
        }
        out
    }
}

/// Left Kronecker factor: a dense matrix or an implicit identity.
#[derive(Debug, Clone, PartialEq)]
pub enum LeftFactor {
    Dense(DenseMatrix),
    Identity(usize),
}

/// One `(A, B)` pair of the mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct KronFactorPair {
    a: LeftFactor,
    b: DenseMatrix,
}

impl KronFactorPair {
    pub fn new(a: DenseMatrix, b: DenseMatrix) -> Self {
        Self {
            a: LeftFactor::Dense(a),
            b,
        }
    }

    /// Pair with `A = I_{n_a}`.
    pub fn with_identity(n_a: usize, b: DenseMatrix) -> Self {
        assert!(n_a > 0, "identity size must be positive");
        Self {
            a: LeftFactor::Identity(n_a),
            b,
        }
    }

    pub fn shape(&self) -> PairShape {
        match &self.a {
            LeftFactor::Dense(a) => PairShape {
                a_rows: a.rows(),
                a_cols: a.cols(),
                b_rows: self.b.rows(),
                b_cols: self.b.cols(),
                identity_a: false,
            },
            LeftFactor::Identity(n) => PairShape::identity(*n, (self.b.rows(), self.b.cols())),
        }
    }

    pub fn identity_a(&self) -> bool {
        matches!(self.a, LeftFactor::Identity(_))
    }

    pub fn left(&self) -> &LeftFactor {
        &self.a
    }

    /// Dense `A`, or `None` for an implicit identity.
    pub fn a(&self) -> Option<&DenseMatrix> {
        match &self.a {
            LeftFactor::Dense(a) => Some(a),
            LeftFactor::Identity(_) => None,
        }
    }

    pub fn a_mut(&mut self) -> Option<&mut DenseMatrix> {
        match &mut self.a {
            LeftFactor::Dense(a) => Some(a),
            LeftFactor::Identity(_) => None,
        }
    }

    /// `A` as a matrix, materializing the identity if needed.
    pub fn a_dense(&self) -> DenseMatrix {
        match &self.a {
            LeftFactor::Dense(a) => a.clone(),
            LeftFactor::Identity(n) => DenseMatrix::identity(*n),
        }
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    pub fn b_mut(&mut self) -> &mut DenseMatrix {
        &mut self.b
    }

    pub fn trainable_params(&self) -> usize {
        self.shape().trainable_params()
    }

    pub(crate) fn check(&self, index: usize, n: usize, m: usize) -> Result<()> {
        match self.shape().violations(m, n).into_iter().next() {
            None => Ok(()),
            Some(reason) => Err(MokaError::PairShape { index, reason }),
        }
    }

    /// `X = R_{n_b, n_a}(x̃)` for an already padded input.
    pub(crate) fn reshape_input(&self, x_pad: &DenseVector) -> Result<DenseMatrix> {
        let s = self.shape();
        reshape_vec_to_matrix(x_pad, s.b_cols, s.a_cols)
    }

    /// `B · X · Aᵀ` (or `B · X` for identity `A`), as a `m_b × m_a` matrix.
    pub(crate) fn product(&self, x_mat: &DenseMatrix) -> Result<DenseMatrix> {
        let bx = matmul(&self.b, x_mat)?;
        match &self.a {
            LeftFactor::Dense(a) => matmul_nt(&bx, a),
            LeftFactor::Identity(_) => Ok(bx),
        }
    }

    /// Untruncated `(A ⊗ B) · x̃` for an input already padded to `n_a·n_b`.
    pub fn apply_padded(&self, x_pad: &DenseVector) -> Result<DenseVector> {
        let x_mat = self.reshape_input(x_pad)?;
        Ok(vec_matrix(&self.product(&x_mat)?))
    }
}

/// Applies a single pair to `x` (length `n`) and returns `m` outputs.
pub fn apply_pair(pair: &KronFactorPair, x: &DenseVector, n: usize, m: usize) -> Result<DenseVector> {
    apply_pair_at(0, pair, x, n, m)
}

pub(crate) fn apply_pair_at(
    index: usize,
    pair: &KronFactorPair,
    x: &DenseVector,
    n: usize,
    m: usize,
) -> Result<DenseVector> {
    if x.len() != n {
        return Err(MokaError::LengthMismatch {
            op: "apply_pair",
            expected: n,
            got: x.len(),
        });
    }
    pair.check(index, n, m)?;
    let x_pad = pad_vector(x, pair.shape().in_capacity())?;
    truncate_vector(&pair.apply_padded(&x_pad)?, m)
}

/// How the mixture weights are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GateMode {
    /// `α = softmax(g)` with trainable logits.
    #[default]
    Learned,
    /// `α_i = 1/r`; logits are ignored and never updated.
    Uniform,
}

/// `ΔW = Σ α_i (A_i ⊗ B_i)` serving an `out_dim × in_dim` layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureAdapter {
    pairs: Vec<KronFactorPair>,
    gate_logits: Vec<f64>,
    gate_mode: GateMode,
    out_dim: usize,
    in_dim: usize,
}

impl MixtureAdapter {
    pub fn new(
        pairs: Vec<KronFactorPair>,
        gate_logits: Vec<f64>,
        out_dim: usize,
        in_dim: usize,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(MokaError::Config("a mixture needs at least one pair".into()));
        }
        if out_dim == 0 || in_dim == 0 {
            return Err(MokaError::ZeroDimension("MixtureAdapter"));
        }
        if gate_logits.len() != pairs.len() {
            return Err(MokaError::LengthMismatch {
                op: "MixtureAdapter::new (gate logits)",
                expected: pairs.len(),
                got: gate_logits.len(),
            });
        }
        if gate_logits.iter().any(|g| !g.is_finite()) {
            return Err(MokaError::NonFinite("gate logits"));
        }
        for (i, p) in pairs.iter().enumerate() {
            p.check(i, in_dim, out_dim)?;
        }
        Ok(Self {
            pairs,
            gate_logits,
            gate_mode: GateMode::Learned,
            out_dim,
            in_dim,
        })
    }

    /// Fresh adapter: `B_i = 0`, `A_i ~ N(0, 1/n_a)`, logits zero, so `ΔW = 0`.
    pub fn init(shapes: &[PairShape], out_dim: usize, in_dim: usize, rng: &mut Rng) -> Result<Self> {
        let pairs = shapes
            .iter()
            .map(|s| {
                let b = DenseMatrix::zeros(s.b_rows.max(1), s.b_cols.max(1));
                if s.identity_a {
                    KronFactorPair::with_identity(s.a_cols.max(1), b)
                } else {
                    let std = 1.0 / (s.a_cols.max(1) as f64).sqrt();
                    KronFactorPair::new(normal_matrix(rng, s.a_rows.max(1), s.a_cols.max(1), std), b)
                }
            })
            .collect::<Vec<_>>();
        // Validate against the requested shapes, not the clamped ones.
        for (i, s) in shapes.iter().enumerate() {
            if let Some(reason) = s.violations(out_dim, in_dim).into_iter().next() {
                return Err(MokaError::PairShape { index: i, reason });
            }
        }
        let r = pairs.len();
        Self::new(pairs, vec![0.0; r], out_dim, in_dim)
    }

    pub fn with_gate_mode(mut self, mode: GateMode) -> Self {
        self.gate_mode = mode;
        self
    }

    pub fn gate_mode(&self) -> GateMode {
        self.gate_mode
    }

    pub fn pairs(&self) -> &[KronFactorPair] {
        &self.pairs
    }

    pub fn pairs_mut(&mut self) -> &mut [KronFactorPair] {
        &mut self.pairs
    }

    pub fn gate_logits(&self) -> &[f64] {
        &self.gate_logits
    }

    pub fn gate_logits_mut(&mut self) -> &mut [f64] {
        &mut self.gate_logits
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn shapes(&self) -> Vec<PairShape> {
        self.pairs.iter().map(KronFactorPair::shape).collect()
    }

    /// Factor parameters plus one logit per pair under learned gating.
    pub fn trainable_params(&self) -> usize {
        let gates = match self.gate_mode {
            GateMode::Learned => self.pairs.len(),
            GateMode::Uniform => 0,
        };
        self.pairs.iter().map(KronFactorPair::trainable_params).sum::<usize>() + gates
    }
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|g| (g - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Mixture weights `α` of the adapter.
pub fn gates(adapter: &MixtureAdapter) -> Vec<f64> {
    match adapter.gate_mode {
        GateMode::Learned => softmax(&adapter.gate_logits),
        GateMode::Uniform => {
            let r = adapter.pairs.len();
            vec![1.0 / r as f64; r]
        }
    }
}

/// `Σ_i α_i · apply_pair(pair_i, x)`.
pub fn apply_mixture(adapter: &MixtureAdapter, x: &DenseVector) -> Result<DenseVector> {
    let (n, m) = (adapter.in_dim, adapter.out_dim);
    if x.len() != n {
        return Err(MokaError::LengthMismatch {
            op: "apply_mixture",
            expected: n,
            got: x.len(),
        });
    }
    let alpha = gates(adapter);
    let mut acc = DenseVector::zeros(m);
    for (i, (pair, a)) in adapter.pairs.iter().zip(alpha).enumerate() {
        acc.add_scaled(&apply_pair_at(i, pair, x, n, m)?, a);
    }
    Ok(acc)
}

/// Frozen layer plus adapter: `W x + ΔW x`.
pub fn adapted_forward(
    w_frozen: &DenseMatrix,
    adapter: &MixtureAdapter,
    x: &DenseVector,
) -> Result<DenseVector> {
    if w_frozen.rows() != adapter.out_dim || w_frozen.cols() != adapter.in_dim {
        return Err(MokaError::ShapeMismatch {
            op: "adapted_forward",
            lhs: w_frozen.shape(),
            rhs: Shape(adapter.out_dim, adapter.in_dim),
        });
    }
    let mut y = w_frozen.matvec(x)?;
    y.add_scaled(&apply_mixture(adapter, x)?, 1.0);
    Ok(y)
}

/// Explicit `m × n` update matrix, refusing more than `cap` entries.
///
/// Padding the input only ever reads the first `n` columns of each
/// `A_i ⊗ B_i` and truncation keeps its first `m` rows, so `ΔW` is the
/// upper-left `m × n` block of the gated sum.
pub fn materialize_delta_capped(adapter: &MixtureAdapter, cap: usize) -> Result<DenseMatrix> {
    let (m, n) = (adapter.out_dim, adapter.in_dim);
    let entries = m.saturating_mul(n);
    if entries > cap {
        return Err(MokaError::SizeCap { entries, cap });
    }
    let alpha = gates(adapter);
    let mut delta = DenseMatrix::zeros(m, n);
    for (pair, a) in adapter.pairs.iter().zip(alpha) {
        let s = pair.shape();
        let b = pair.b();
        for r in 0..m {
            let (ia, ib) = (r / s.b_rows, r % s.b_rows);
            for c in 0..n {
                let (ja, jb) = (c / s.b_cols, c % s.b_cols);
                let a_entry = match pair.left() {
                    LeftFactor::Dense(am) => am[(ia, ja)],
                    LeftFactor::Identity(_) => {
                        if ia == ja {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
                delta[(r, c)] += a * (a_entry * b[(ib, jb)]);
            }
        }
    }
    Ok(delta)
}

pub fn materialize_delta(adapter: &MixtureAdapter) -> Result<DenseMatrix> {
    materialize_delta_capped(adapter, DEFAULT_EXPLICIT_CAP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::kron_explicit;
    use crate::rng::{normal_matrix, normal_vector, stream};
    use crate::sample::random_adapter;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn vector(v: &[f64]) -> DenseVector {
        DenseVector::from_vec(v.to_vec()).unwrap()
    }

    fn scalar(v: f64) -> DenseMatrix {
        DenseMatrix::from_vec(1, 1, vec![v]).unwrap()
    }

    /// `Σ α_i trunc((A_i ⊗ B_i) pad(x))` through explicit Kronecker products.
    fn explicit_mixture(adapter: &MixtureAdapter, x: &DenseVector) -> DenseVector {
        let alpha = gates(adapter);
        let mut acc = vec![0.0; adapter.out_dim()];
        for (pair, a) in adapter.pairs().iter().zip(alpha) {
            let k = kron_explicit(&pair.a_dense(), pair.b()).unwrap();
            let xp = pad_vector(x, k.cols()).unwrap();
            let y = k.matvec(&xp).unwrap();
            for (o, v) in acc.iter_mut().zip(y.as_slice()) {
                *o += a * v;
            }
        }
        DenseVector::from_vec(acc).unwrap()
    }

    #[test]
    fn apply_pair_identity_and_scalar() {
        let pair = KronFactorPair::new(DenseMatrix::identity(2), DenseMatrix::identity(2));
        let x = vector(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(apply_pair(&pair, &x, 4, 4).unwrap(), x);

        let pair = KronFactorPair::new(scalar(2.0), scalar(3.0));
        assert_eq!(apply_pair(&pair, &vector(&[5.0]), 1, 1).unwrap(), vector(&[30.0]));
    }

    #[test]
    fn apply_pair_matches_explicit_kron_with_padding() {
        let mut rng = stream(21, 0, 0);
        let a = normal_matrix(&mut rng, 3, 4, 1.0);
        let b = normal_matrix(&mut rng, 5, 2, 1.0);
        let x = normal_vector(&mut rng, 8, 1.0);
        let pair = KronFactorPair::new(a.clone(), b.clone());
        let got = apply_pair(&pair, &x, 8, 15).unwrap();
        let want = kron_explicit(&a, &b).unwrap().matvec(&x).unwrap();
        assert!(got.max_abs_diff(&want) <= 1e-10);

        // n < n_a*n_b and m < m_a*m_b
        let x7 = normal_vector(&mut rng, 7, 1.0);
        let got = apply_pair(&pair, &x7, 7, 11).unwrap();
        let full = kron_explicit(&a, &b).unwrap().matvec(&pad_vector(&x7, 8).unwrap()).unwrap();
        assert!(got.max_abs_diff(&truncate_vector(&full, 11).unwrap()) <= 1e-10);
    }

    #[test]
    fn apply_pair_rejects_bad_shapes() {
        let pair = KronFactorPair::new(DenseMatrix::identity(2), DenseMatrix::identity(2));
        let x5 = DenseVector::zeros(5);
        assert!(matches!(
            apply_pair(&pair, &x5, 5, 4),
            Err(MokaError::PairShape { index: 0, .. })
        ));
        assert!(apply_pair(&pair, &x5, 4, 4).is_err());
        let x4 = DenseVector::zeros(4);
        assert!(apply_pair(&pair, &x4, 4, 5).is_err());
    }

    #[test]
    fn mixture_constructor_names_offending_pair() {
        let ok = KronFactorPair::new(DenseMatrix::identity(3), DenseMatrix::identity(3));
        let bad = KronFactorPair::new(DenseMatrix::identity(2), DenseMatrix::identity(2));
        let err = MixtureAdapter::new(vec![ok, bad], vec![0.0, 0.0], 9, 9).unwrap_err();
        assert!(matches!(err, MokaError::PairShape { index: 1, .. }), "{err}");
    }

    #[test]
    fn gates_examples() {
        let mk = |logits: Vec<f64>| {
            let r = logits.len();
            let pairs = (0..r).map(|_| KronFactorPair::new(scalar(1.0), scalar(1.0))).collect();
            MixtureAdapter::new(pairs, logits, 1, 1).unwrap()
        };
        for a in gates(&mk(vec![0.0; 3])) {
            assert!((a - 1.0 / 3.0).abs() <= 1e-15);
        }
        let g = gates(&mk(vec![1f64.ln(), 2f64.ln(), 3f64.ln()]));
        for (a, want) in g.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((a - want).abs() <= 1e-15);
        }
        let g = gates(&mk(vec![1000.0, 0.0]));
        assert_eq!(g, vec![1.0, 0.0]);
        let uniform = mk(vec![5.0, -3.0, 0.0, 1.0]).with_gate_mode(GateMode::Uniform);
        assert_eq!(gates(&uniform), vec![0.25; 4]);
    }

    #[test]
    fn mixture_degenerate_cases() {
        let mut rng = stream(2, 0, 0);
        let a = normal_matrix(&mut rng, 2, 3, 1.0);
        let b = normal_matrix(&mut rng, 3, 2, 1.0);
        let x = normal_vector(&mut rng, 6, 1.0);
        let pair = KronFactorPair::new(a, b);
        let single = MixtureAdapter::new(vec![pair.clone()], vec![0.3], 6, 6).unwrap();
        assert_eq!(apply_mixture(&single, &x).unwrap(), apply_pair(&pair, &x, 6, 6).unwrap());

        let twin = MixtureAdapter::new(vec![pair.clone(), pair.clone()], vec![0.0, 0.0], 6, 6).unwrap();
        let y = apply_mixture(&twin, &x).unwrap();
        assert!(y.max_abs_diff(&apply_pair(&pair, &x, 6, 6).unwrap()) <= 1e-15);
    }

    #[test]
    fn mixture_matches_explicit_oracle() {
        for seed in 0..20 {
            let mut rng = stream(seed, 0, 0);
            let adapter = random_adapter(&mut rng, 3, 6, true);
            let x = normal_vector(&mut rng, adapter.in_dim(), 1.0);
            let got = apply_mixture(&adapter, &x).unwrap();
            assert!(got.max_abs_diff(&explicit_mixture(&adapter, &x)) <= 1e-10);
        }
    }

    #[test]
    fn zero_init_adapter_is_transparent() {
        let mut rng = stream(4, 0, 0);
        let shapes = [PairShape::new((4, 4), (4, 4)), PairShape::new((2, 8), (8, 2))];
        let adapter = MixtureAdapter::init(&shapes, 16, 16, &mut rng).unwrap();
        let w = normal_matrix(&mut rng, 16, 16, 1.0);
        let x = normal_vector(&mut rng, 16, 1.0);
        assert_eq!(adapted_forward(&w, &adapter, &x).unwrap(), w.matvec(&x).unwrap());
        let random = random_adapter(&mut rng, 2, 6, true);
        let x = normal_vector(&mut rng, random.in_dim(), 1.0);
        let zw = DenseMatrix::zeros(random.out_dim(), random.in_dim());
        assert_eq!(adapted_forward(&zw, &random, &x).unwrap(), apply_mixture(&random, &x).unwrap());
        let wrong = DenseMatrix::zeros(random.out_dim() + 1, random.in_dim());
        assert!(adapted_forward(&wrong, &random, &x).is_err());
    }

    #[test]
    fn adapted_forward_matches_materialized_weight() {
        let mut rng = stream(6, 0, 0);
        let adapter = random_adapter(&mut rng, 3, 5, true);
        let w = normal_matrix(&mut rng, adapter.out_dim(), adapter.in_dim(), 1.0);
        let x = normal_vector(&mut rng, adapter.in_dim(), 1.0);
        let mut full = w.clone();
        full.add_scaled(&materialize_delta(&adapter).unwrap(), 1.0).unwrap();
        let got = adapted_forward(&w, &adapter, &x).unwrap();
        assert!(got.max_abs_diff(&full.matvec(&x).unwrap()) <= 1e-10);
    }

    #[test]
    fn materialize_examples() {
        let mut rng = stream(8, 0, 0);
        let a = normal_matrix(&mut rng, 2, 3, 1.0);
        let b = normal_matrix(&mut rng, 4, 2, 1.0);
        let adapter =
            MixtureAdapter::new(vec![KronFactorPair::new(a.clone(), b.clone())], vec![0.0], 8, 6)
                .unwrap();
        assert_eq!(materialize_delta(&adapter).unwrap(), kron_explicit(&a, &b).unwrap());

        let pairs: Vec<_> = (0..3)
            .map(|_| {
                KronFactorPair::new(normal_matrix(&mut rng, 2, 3, 1.0), normal_matrix(&mut rng, 4, 2, 1.0))
            })
            .collect();
        let k0 = kron_explicit(&pairs[0].a_dense(), pairs[0].b()).unwrap();
        let saturated = MixtureAdapter::new(pairs, vec![50.0, 0.0, 0.0], 8, 6).unwrap();
        assert!(materialize_delta(&saturated).unwrap().max_abs_diff(&k0) <= 1e-8);

        assert!(matches!(
            materialize_delta_capped(&saturated, 47),
            Err(MokaError::SizeCap { entries: 48, cap: 47 })
        ));
    }

    #[test]
    fn materialize_matches_basis_probes() {
        let mut rng = stream(10, 0, 0);
        for _ in 0..10 {
            let adapter = random_adapter(&mut rng, 3, 6, true);
            let delta = materialize_delta(&adapter).unwrap();
            for j in 0..adapter.in_dim() {
                let col = apply_mixture(&adapter, &DenseVector::basis(adapter.in_dim(), j)).unwrap();
                for i in 0..adapter.out_dim() {
                    assert!((delta[(i, j)] - col[i]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn identity_fast_path_is_bitwise_equal() {
        let mut rng = stream(12, 0, 0);
        for _ in 0..50 {
            let n_a = rng.random_range(1..=6);
            let (mb, nb) = (rng.random_range(1..=5), rng.random_range(1..=5));
            let b = normal_matrix(&mut rng, mb, nb, 1.0);
            let fast = KronFactorPair::with_identity(n_a, b.clone());
            let slow = KronFactorPair::new(DenseMatrix::identity(n_a), b.clone());
            let n = n_a * b.cols();
            let m = n_a * b.rows();
            let x = normal_vector(&mut rng, n, 1.0);
            let yf = apply_pair(&fast, &x, n, m).unwrap();
            let ys = apply_pair(&slow, &x, n, m).unwrap();
            assert!(yf.as_slice().iter().zip(ys.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn init_rejects_undersized_pairs() {
        let mut rng = stream(1, 0, 0);
        let err = MixtureAdapter::init(&[PairShape::new((2, 2), (2, 2))], 4, 5, &mut rng).unwrap_err();
        assert!(err.to_string().contains("< n = 5"), "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn gates_form_a_shift_invariant_simplex(
            logits in prop::collection::vec(-30.0f64..30.0, 1..8),
            shift in -100.0f64..100.0,
        ) {
            let a = softmax(&logits);
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(a.iter().all(|v| *v > 0.0));
            let shifted: Vec<f64> = logits.iter().map(|g| g + shift).collect();
            let b = softmax(&shifted);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn mixture_is_linear(seed in any::<u64>(), s in -3.0f64..3.0, t in -3.0f64..3.0) {
            let mut rng = stream(seed, 0, 0);
            let adapter = random_adapter(&mut rng, 3, 8, true);
            let x = normal_vector(&mut rng, adapter.in_dim(), 1.0);
            let y = normal_vector(&mut rng, adapter.in_dim(), 1.0);
            let mut comb = x.scaled(s);
            comb.add_scaled(&y, t);
            let lhs = apply_mixture(&adapter, &comb).unwrap();
            let mut rhs = apply_mixture(&adapter, &x).unwrap().scaled(s);
            rhs.add_scaled(&apply_mixture(&adapter, &y).unwrap(), t);
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-10);
        }

        #[test]
        fn exact_fit_needs_no_padding(seed in any::<u64>(), ma in 1usize..5, na in 1usize..5, mb in 1usize..5, nb in 1usize..5) {
            let mut rng = stream(seed, 0, 0);
            let a = normal_matrix(&mut rng, ma, na, 1.0);
            let b = normal_matrix(&mut rng, mb, nb, 1.0);
            let x = normal_vector(&mut rng, na * nb, 1.0);
            let pair = KronFactorPair::new(a.clone(), b.clone());
            let got = apply_pair(&pair, &x, na * nb, ma * mb).unwrap();
            let direct = vec_matrix(&matmul_nt(&matmul(&b, &reshape_vec_to_matrix(&x, nb, na).unwrap()).unwrap(), &a).unwrap());
            prop_assert_eq!(got, direct);
        }
    }
}
