//! CSV and JSON metric output.
//!
//! Floats are written with 17 significant digits so every value round-trips
//! to the same `f64`.

use std::io::{self, Write};

use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// Rows under a fixed header.
#[derive(Debug, Clone)]
pub struct MetricTable {
    header: &'static [&'static str],
    rows: Vec<Vec<Cell>>,
}

impl MetricTable {
    pub fn new(header: &'static [&'static str]) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> &[&'static str] {
        self.header
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    /// Panics if the row length differs from the header.
    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row does not match header");
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Column order of `train.csv`.
pub const TRAIN_COLUMNS: &[&str] = &["step", "loss", "grad_norm_sq", "mean_grad_norm_sq", "factor_bound_term"];

/// Column order of the `bench` CSV.
pub const BENCH_COLUMNS: &[&str] = &[
    "shape",
    "m",
    "n",
    "reformulated_flops",
    "explicit_flops",
    "flop_ratio",
    "reformulated_median_ns",
    "explicit_median_ns",
    "time_ratio",
    "reformulated_peak_bytes",
    "explicit_peak_bytes",
    "max_abs_diff",
    "explicit_status",
];

pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
