//! `verify`: oracle, gradient and algebraic property suites on seeded random
//! instances.

use std::io::Write;

use rand::Rng as _;

use moka_core::adapter::{apply_mixture, materialize_delta, softmax, KronFactorPair, MixtureAdapter};
use moka_core::dense::{frobenius_norm, kron_explicit, numeric_rank, DenseMatrix, DEFAULT_RANK_TOL};
use moka_core::grad::{finite_difference_check_with, FdOptions, HalfSquaredNorm, LinearLoss, OutputLoss};
use moka_core::rng::{normal_matrix, normal_vector, stream, streams, Rng};
use moka_core::sample::{planted_rank_matrix, random_adapter};
use moka_core::shapes::{count_trainable_params, ModelPreset, ShapeConfig, Variant};
use moka_core::tasks::make_toy_attention;
use moka_core::PairShape;

use crate::error::CliError;

pub const DEFAULT_SIZES: &[usize] = &[2, 4, 8, 16];
/// Largest factor dimension accepted in a size sweep.
pub const MAX_SWEEP_SIZE: usize = 32;
/// Relative perturbation of `dB` used by `--inject-bug`.
pub const INJECTED_FAULT: f64 = 1e-3;

pub const ORACLE_TOL: f64 = 1e-10;
pub const FD_TOL: f64 = 1e-5;
pub const ATTENTION_FD_TOL: f64 = 1e-4;
pub const ALGEBRA_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub inject_bug: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            sizes: DEFAULT_SIZES.to_vec(),
            inject_bug: false,
        }
    }
}

/// `"2,4,8"` → sizes, each in `1..=MAX_SWEEP_SIZE`.
pub fn parse_sizes(list: &str) -> Result<Vec<usize>, CliError> {
    let sizes: Vec<usize> = list
        .split(',')
        .map(|s| {
            let s = s.trim();
            match s.parse::<usize>() {
                Ok(v) if (1..=MAX_SWEEP_SIZE).contains(&v) => Ok(v),
                _ => Err(CliError::Usage(format!(
                    "invalid size `{s}` in --sizes (expected an integer in 1..={MAX_SWEEP_SIZE})"
                ))),
            }
        })
        .collect::<Result<_, _>>()?;
    if sizes.is_empty() {
        return Err(CliError::Usage("--sizes is empty".into()));
    }
    Ok(sizes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub instances: usize,
    /// Worst observed error (or mismatch count for exact suites).
    pub worst: f64,
    pub tol: f64,
    pub passed: bool,
}

impl SuiteResult {
    fn new(name: &'static str, instances: usize, worst: f64, tol: f64) -> Self {
        Self {
            name,
            instances,
            worst,
            tol,
            passed: worst <= tol,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{:<22} {}  instances={:<4} worst={:.3e} tol={:.0e}",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.instances,
            self.worst,
            self.tol
        )
    }
}

fn per_size(total: usize, sizes: &[usize]) -> usize {
    total.div_ceil(sizes.len())
}

/// `apply_mixture` against the materialized update, at least 200 instances.
pub fn oracle_suite(seed: u64, sizes: &[usize]) -> Result<SuiteResult, CliError> {
    let per = per_size(200, sizes);
    let mut worst = 0.0_f64;
    let mut count = 0;
    for (si, &size) in sizes.iter().enumerate() {
        for i in 0..per {
            let mut rng = stream(seed, streams::VERIFY, (si * 10_000 + i) as u64);
            let r = rng.random_range(1..=4);
            let adapter = random_adapter(&mut rng, r, size, true);
            let x = normal_vector(&mut rng, adapter.in_dim(), 1.0);
            let fast = apply_mixture(&adapter, &x)?;
            let slow = materialize_delta(&adapter)?.matvec(&x)?;
            worst = worst.max(fast.max_abs_diff(&slow));
            count += 1;
        }
    }
    Ok(SuiteResult::new("oracle", count, worst, ORACLE_TOL))
}

/// Central differences on every block of at least 20 random adapters.
pub fn gradient_suite(seed: u64, sizes: &[usize], fault: f64) -> Result<SuiteResult, CliError> {
    let per = per_size(24, sizes);
    let mut worst = 0.0_f64;
    let mut count = 0;
    for (si, &size) in sizes.iter().enumerate() {
        for i in 0..per {
            let mut rng = stream(seed, streams::VERIFY, (1_000_000 + si * 10_000 + i) as u64);
            let r = rng.random_range(1..=3);
            let adapter = random_adapter(&mut rng, r, size.min(6), true);
            let x = normal_vector(&mut rng, adapter.in_dim(), 1.0);
            let linear;
            let loss: &dyn OutputLoss = if i % 2 == 0 {
                linear = LinearLoss(normal_vector(&mut rng, adapter.out_dim(), 1.0));
                &linear
            } else {
                &HalfSquaredNorm
            };
            let report = finite_difference_check_with(&adapter, &x, loss, FdOptions { fault, ..FdOptions::default() })?;
            worst = worst.max(report.worst());
            count += 1;
        }
    }
    Ok(SuiteResult::new("gradients", count, worst, FD_TOL))
}

/// Central differences through the toy attention block (`s = 4`, `d = 8`).
pub fn attention_gradient_suite(seed: u64) -> Result<SuiteResult, CliError> {
    let shapes = [PairShape::new((2, 2), (4, 4)), PairShape::new((4, 4), (2, 2))];
    let mut worst = 0.0_f64;
    let n = 3;
    for i in 0..n {
        let task_seed = seed.wrapping_add(i);
        let task = make_toy_attention(4, 8, &shapes, &shapes, task_seed, 2)?;
        let mut rng = stream(seed, streams::VERIFY, 2_000_000 + i);
        let adapters = vec![
            moka_core::sample::adapter_from_shapes(&mut rng, &shapes, 8, 8),
            moka_core::sample::adapter_from_shapes(&mut rng, &shapes, 8, 8),
        ];
        use moka_core::trainer::Objective;
        let report = task.gradient_check(&adapters, task.full_batch(), 1e-5)?;
        worst = worst.max(report.worst());
    }
    Ok(SuiteResult::new("attention_gradients", n as usize, worst, ATTENTION_FD_TOL))
}

fn explicit_identity_copy(adapter: &MixtureAdapter) -> MixtureAdapter {
    let pairs = adapter
        .pairs()
        .iter()
        .map(|p| KronFactorPair::new(p.a_dense(), p.b().clone()))
        .collect();
    MixtureAdapter::new(pairs, adapter.gate_logits().to_vec(), adapter.out_dim(), adapter.in_dim())
        .expect("same shapes as a valid adapter")
}

/// Random identity-left adapter with all pairs using `A = I`.
pub fn random_identity_adapter(rng: &mut Rng, max_dim: usize) -> MixtureAdapter {
    let r = rng.random_range(1..=4);
    let pairs: Vec<KronFactorPair> = (0..r)
        .map(|_| {
            let n_a = rng.random_range(1..=max_dim);
            let (mb, nb) = (rng.random_range(1..=max_dim), rng.random_range(1..=max_dim));
            KronFactorPair::with_identity(n_a, normal_matrix(rng, mb, nb, 1.0))
        })
        .collect();
    let m = pairs.iter().map(|p| p.shape().out_capacity()).min().unwrap_or(1);
    let n = pairs.iter().map(|p| p.shape().in_capacity()).min().unwrap_or(1);
    let (m, n) = (rng.random_range(1..=m), rng.random_range(1..=n));
    let logits = (0..r).map(|_| rng.random_range(-1.0..=1.0)).collect();
    MixtureAdapter::new(pairs, logits, m, n).expect("shapes fit by construction")
}

/// Identity fast path against the same adapter with explicit identity
/// matrices; counts instances whose outputs differ in any bit.
pub fn identity_suite(seed: u64, instances: usize) -> Result<SuiteResult, CliError> {
    let mut mismatches = 0;
    for i in 0..instances {
        let mut rng = stream(seed, streams::VERIFY, 3_000_000 + i as u64);
        let fast = random_identity_adapter(&mut rng, 8);
        let slow = explicit_identity_copy(&fast);
        let x = normal_vector(&mut rng, fast.in_dim(), 1.0);
        let (yf, ys) = (apply_mixture(&fast, &x)?, apply_mixture(&slow, &x)?);
        let same = yf
            .as_slice()
            .iter()
            .zip(ys.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            mismatches += 1;
        }
    }
    Ok(SuiteResult::new("identity_fast_path", instances, mismatches as f64, 0.0))
}

/// Simplex membership and shift invariance of the gates.
pub fn gate_suite(seed: u64) -> SuiteResult {
    let mut worst = 0.0_f64;
    let n = 200;
    for i in 0..n {
        let mut rng = stream(seed, streams::VERIFY, 4_000_000 + i);
        let r = rng.random_range(1..=12);
        let logits: Vec<f64> = (0..r).map(|_| rng.random_range(-30.0..30.0)).collect();
        let c = rng.random_range(-100.0..100.0);
        let p = softmax(&logits);
        if p.iter().any(|v| *v < 0.0) {
            worst = f64::INFINITY;
        }
        worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
        let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            worst = worst.max((a - b).abs());
        }
    }
    SuiteResult::new("gate_simplex", n as usize, worst, ALGEBRA_TOL)
}

/// `‖A ⊗ B‖_F = ‖A‖_F ‖B‖_F`, relative error.
pub fn frobenius_suite(seed: u64) -> Result<SuiteResult, CliError> {
    let mut worst = 0.0_f64;
    let n = 100;
    for i in 0..n {
        let mut rng = stream(seed, streams::VERIFY, 5_000_000 + i);
        let mut d = || rng.random_range(1..=8);
        let (ra, ca, rb, cb) = (d(), d(), d(), d());
        let a = normal_matrix(&mut rng, ra, ca, 1.0);
        let b = normal_matrix(&mut rng, rb, cb, 1.0);
        let lhs = frobenius_norm(&kron_explicit(&a, &b)?);
        let rhs = frobenius_norm(&a) * frobenius_norm(&b);
        worst = worst.max((lhs - rhs).abs() / rhs);
    }
    Ok(SuiteResult::new("frobenius", n as usize, worst, ALGEBRA_TOL))
}

/// `rank(A ⊗ B) = rank(A) rank(B)` on planted ranks `1..=3`, dims ≤ 8.
/// Worst is the number of instances where any rank came out wrong.
pub fn rank_suite(seed: u64) -> Result<SuiteResult, CliError> {
    let mut wrong = 0;
    let mut count = 0;
    for ka in 1..=3 {
        for kb in 1..=3 {
            for i in 0..10u64 {
                let mut rng = stream(seed, streams::VERIFY, 6_000_000 + (ka * 3 + kb) as u64 * 100 + i);
                let mut d = || rng.random_range(3..=8);
                let (ra, ca, rb, cb) = (d(), d(), d(), d());
                let a = planted_rank_matrix(&mut rng, ra, ca, ka);
                let b = planted_rank_matrix(&mut rng, rb, cb, kb);
                let k: DenseMatrix = kron_explicit(&a, &b)?;
                let ok = numeric_rank(&a, DEFAULT_RANK_TOL) == ka
                    && numeric_rank(&b, DEFAULT_RANK_TOL) == kb
                    && numeric_rank(&k, DEFAULT_RANK_TOL) == ka * kb;
                if !ok {
                    wrong += 1;
                }
                count += 1;
            }
        }
    }
    Ok(SuiteResult::new("rank", count, wrong as f64, 0.0))
}

/// Preset parameter counts against their closed forms.
pub fn count_suite() -> Result<SuiteResult, CliError> {
    let expected = [
        (ModelPreset::Llama2_7b, Variant::Moka, 5_243_520),
        (ModelPreset::Llama2_7b, Variant::MokaS, 4_212_544),
        (ModelPreset::Llama3_8b, Variant::Moka, 3_932_800),
        (ModelPreset::Llama3_8b, Variant::MokaSQueryOnly, 2_106_272),
    ];
    let mut wrong = 0;
    for (m, v, want) in expected {
        if count_trainable_params(&ShapeConfig::preset(m, v)?) != want {
            wrong += 1;
        }
    }
    Ok(SuiteResult::new("param_counts", expected.len(), wrong as f64, 0.0))
}

pub fn run_verify(opts: &VerifyOptions) -> Result<Vec<SuiteResult>, CliError> {
    let fault = if opts.inject_bug { INJECTED_FAULT } else { 0.0 };
    Ok(vec![
        oracle_suite(opts.seed, &opts.sizes)?,
        gradient_suite(opts.seed, &opts.sizes, fault)?,
        attention_gradient_suite(opts.seed)?,
        identity_suite(opts.seed, 50)?,
        gate_suite(opts.seed),
        frobenius_suite(opts.seed)?,
        rank_suite(opts.seed)?,
        count_suite()?,
    ])
}

/// Prints one line per suite; fails if any suite fails.
pub fn cmd_verify(opts: &VerifyOptions, out: &mut dyn Write) -> Result<(), CliError> {
    let results = run_verify(opts)?;
    for r in &results {
        writeln!(out, "{}", r.line()).map_err(|e| CliError::io("stdout", e))?;
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failure(format!("failed suites: {}", failed.join(", "))))
    }
}
