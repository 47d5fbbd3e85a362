//! `bench`: reformulated apply against an explicit materialized matvec.
//!
//! Both arms are timed on the same single-pair adapter and input. The
//! explicit arm materializes `ΔW` once outside the timed region, then times
//! only the `m × n` matvec. Flop counts use two flops per multiply-add.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use moka_core::adapter::{apply_mixture, materialize_delta_capped, PairShape};
use moka_core::dense::{DenseVector, DEFAULT_EXPLICIT_CAP};
use moka_core::error::MokaError;
use moka_core::rng::{normal_vector, stream, streams};
use moka_core::sample::adapter_from_shapes;

use crate::config::parse_dims;
use crate::error::CliError;
use crate::metrics::{Cell, MetricTable, BENCH_COLUMNS};

pub const DEFAULT_SHAPES: &str = "1x1:1x1,8x8:8x8,16x16:16x16,64x64:64x64";
pub const DEFAULT_REPEATS: usize = 5;

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub shapes: Vec<PairShape>,
    pub repeats: usize,
    pub seed: u64,
    /// Write zero for every timing column so output is byte-stable.
    pub reproducible: bool,
    pub cap: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            shapes: parse_shapes(DEFAULT_SHAPES).expect("default shapes parse"),
            repeats: DEFAULT_REPEATS,
            seed: 0,
            reproducible: false,
            cap: DEFAULT_EXPLICIT_CAP,
        }
    }
}

/// `"64x64:64x64,8x4:4x8"`, each item `A:B`.
pub fn parse_shapes(list: &str) -> Result<Vec<PairShape>, CliError> {
    list.split(',')
        .map(|item| {
            let item = item.trim();
            let parsed = item
                .split_once(':')
                .and_then(|(a, b)| Some(PairShape::new(parse_dims(a)?, parse_dims(b)?)));
            parsed.ok_or_else(|| {
                CliError::Usage(format!("invalid shape `{item}` (expected e.g. `64x64:64x64`)"))
            })
        })
        .collect()
}

/// Flops of `B·X·Aᵀ` for one pair.
pub fn reformulated_flops(s: &PairShape) -> u64 {
    let (ma, na, mb, nb) = (s.a_rows as u64, s.a_cols as u64, s.b_rows as u64, s.b_cols as u64);
    2 * mb * nb * na + 2 * mb * na * ma
}

/// Flops of an `m × n` matvec.
pub fn explicit_flops(m: usize, n: usize) -> u64 {
    2 * m as u64 * n as u64
}

/// Bytes live at once in the reformulated arm: padded input, `B·X` and output.
pub fn reformulated_peak_bytes(s: &PairShape) -> u64 {
    8 * (s.in_capacity() + s.b_rows * s.a_cols + s.out_capacity()) as u64
}

/// Bytes of the materialized matrix plus input and output.
pub fn explicit_peak_bytes(m: usize, n: usize) -> u64 {
    8 * (m * n + m + n) as u64
}

fn median_ns<F: FnMut()>(repeats: usize, mut f: F) -> u64 {
    f();
    let mut times: Vec<u64> = (0..repeats)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_nanos() as u64
        })
        .collect();
    times.sort_unstable();
    times[times.len() / 2]
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub shape: PairShape,
    pub m: usize,
    pub n: usize,
    pub reformulated_ns: u64,
    pub explicit_ns: Option<u64>,
    pub max_abs_diff: Option<f64>,
}

impl BenchRow {
    pub fn flop_ratio(&self) -> f64 {
        explicit_flops(self.m, self.n) as f64 / reformulated_flops(&self.shape) as f64
    }

    pub fn time_ratio(&self) -> Option<f64> {
        self.explicit_ns
            .map(|e| e as f64 / self.reformulated_ns.max(1) as f64)
    }
}

pub fn bench_shape(shape: &PairShape, opts: &BenchOptions, index: usize) -> Result<BenchRow, CliError> {
    let (m, n) = (shape.out_capacity(), shape.in_capacity());
    let mut rng = stream(opts.seed, streams::BENCH, index as u64);
    let adapter = adapter_from_shapes(&mut rng, std::slice::from_ref(shape), m, n);
    let x: DenseVector = normal_vector(&mut rng, n, 1.0);
    let fast = apply_mixture(&adapter, &x)?;
    let reformulated_ns = median_ns(opts.repeats, || {
        black_box(apply_mixture(black_box(&adapter), black_box(&x)).expect("shapes checked"));
    });
    let (explicit_ns, max_abs_diff) = match materialize_delta_capped(&adapter, opts.cap) {
        Ok(w) => {
            let slow = w.matvec(&x)?;
            let ns = median_ns(opts.repeats, || {
                black_box(black_box(&w).matvec(black_box(&x)).expect("shapes checked"));
            });
            (Some(ns), Some(fast.max_abs_diff(&slow)))
        }
        Err(MokaError::SizeCap { .. }) => (None, None),
        Err(e) => return Err(e.into()),
    };
    Ok(BenchRow {
        shape: *shape,
        m,
        n,
        reformulated_ns,
        explicit_ns,
        max_abs_diff,
    })
}

pub fn run_bench(opts: &BenchOptions) -> Result<(Vec<BenchRow>, MetricTable), CliError> {
    if opts.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let mut rows = Vec::new();
    let mut table = MetricTable::new(BENCH_COLUMNS);
    for (i, s) in opts.shapes.iter().enumerate() {
        let row = bench_shape(s, opts, i)?;
        let timing = |v: Option<u64>| Cell::Int(if opts.reproducible { 0 } else { v.unwrap_or(0) });
        table.push(vec![
            Cell::Text(format!("{}x{}:{}x{}", s.a_rows, s.a_cols, s.b_rows, s.b_cols)),
            Cell::Int(row.m as u64),
            Cell::Int(row.n as u64),
            Cell::Int(reformulated_flops(s)),
            Cell::Int(explicit_flops(row.m, row.n)),
            Cell::Float(row.flop_ratio()),
            timing(Some(row.reformulated_ns)),
            timing(row.explicit_ns),
            Cell::Float(if opts.reproducible { 0.0 } else { row.time_ratio().unwrap_or(0.0) }),
            Cell::Int(reformulated_peak_bytes(s)),
            Cell::Int(explicit_peak_bytes(row.m, row.n)),
            Cell::Float(row.max_abs_diff.unwrap_or(0.0)),
            Cell::Text(if row.explicit_ns.is_some() { "ok" } else { "over_cap" }.into()),
        ]);
        rows.push(row);
    }
    Ok((rows, table))
}

pub fn cmd_bench(opts: &BenchOptions, out: &mut dyn Write) -> Result<(), CliError> {
    let (_, table) = run_bench(opts)?;
    table.write_csv(out).map_err(|e| CliError::io("output", e))
}
