//! Flat `key = value` config files with repeated sections.
//!
//! ```text
//! # comments run to end of line
//! task = planted
//! eta = 0.05
//! steps = 5000
//! m = 16
//! n = 16
//!
//! [pair]
//! a = 4x4
//! b = 4x4
//! repeat = 2
//! ```
//!
//! Training keys: `task` (`planted`, `frozen_linear`, `toy_attention`), `eta`,
//! `steps`, `batch` (`full` or a size, default 32), `record_every`
//! (default 1), `seed` (default 0), `reproducible` (default false),
//! `gate_mode` (`learned` or `uniform`). Task keys: `m`, `n`, `probes` for
//! the linear tasks, `rho` for `frozen_linear`, `seq_len`, `dim`, `pool` for
//! `toy_attention`.
//!
//! A `[pair]` takes `a = RxC` or `identity = N` (an `N × N` identity left
//! factor), `b = RxC`, optional `repeat`, and for `toy_attention` an optional
//! `projection = q|v` (default both).
//!
//! Model files for `count` use `layers` and repeated `[projection]` sections
//! with `name`, `m`, `n`; each following `[pair]` belongs to the projection
//! above it.

use moka_core::adapter::{GateMode, PairShape};
use moka_core::shapes::ProjectionShape;
use moka_core::tasks::{TaskSpec, DEFAULT_PROBES};
use moka_core::trainer::{BatchMode, TrainConfig};

use crate::error::ConfigError;

pub const DEFAULT_BATCH: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SectionKind {
    Pair,
    Projection,
}

#[derive(Debug, Clone)]
struct Section {
    kind: SectionKind,
    line: usize,
    entries: Vec<Entry>,
}

#[derive(Debug, Clone, Default)]
struct RawConfig {
    top: Vec<Entry>,
    sections: Vec<Section>,
}

fn parse_raw(text: &str) -> Result<RawConfig, ConfigError> {
    let mut raw = RawConfig::default();
    for (idx, full) in text.lines().enumerate() {
        let line = idx + 1;
        let content = full.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let kind = match name.trim() {
                "pair" => SectionKind::Pair,
                "projection" => SectionKind::Projection,
                other => return Err(ConfigError::at(line, format!("unknown section `[{other}]`"))),
            };
            raw.sections.push(Section {
                kind,
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::at(line, format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::at(line, "empty key or value"));
        }
        let scope = match raw.sections.last_mut() {
            Some(s) => &mut s.entries,
            None => &mut raw.top,
        };
        if scope.iter().any(|e| e.key == key) {
            return Err(ConfigError::key(Some(line), key, "duplicate key"));
        }
        scope.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line,
        });
    }
    Ok(raw)
}

/// Tracks which keys of a scope have been consumed.
struct Fields<'a> {
    entries: &'a [Entry],
    used: Vec<bool>,
}

impl<'a> Fields<'a> {
    fn new(entries: &'a [Entry]) -> Self {
        Self {
            entries,
            used: vec![false; entries.len()],
        }
    }

    fn take(&mut self, key: &str) -> Option<&'a Entry> {
        let i = self.entries.iter().position(|e| e.key == key)?;
        self.used[i] = true;
        Some(&self.entries[i])
    }

    fn require(&mut self, key: &str, scope_line: Option<usize>) -> Result<&'a Entry, ConfigError> {
        self.take(key)
            .ok_or_else(|| ConfigError::key(scope_line, key, "missing required key"))
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.iter().zip(&self.used).find(|(_, u)| !**u) {
            Some((e, _)) => Err(ConfigError::key(Some(e.line), &e.key, "unknown key")),
            None => Ok(()),
        }
    }
}

fn bad(e: &Entry, what: &str) -> ConfigError {
    ConfigError::key(Some(e.line), &e.key, format!("expected {what}, got `{}`", e.value))
}

fn parse_usize(e: &Entry) -> Result<usize, ConfigError> {
    e.value.parse().map_err(|_| bad(e, "a non-negative integer"))
}

fn parse_positive(e: &Entry) -> Result<usize, ConfigError> {
    match parse_usize(e)? {
        0 => Err(ConfigError::key(Some(e.line), &e.key, "must be at least 1")),
        v => Ok(v),
    }
}

fn parse_f64(e: &Entry) -> Result<f64, ConfigError> {
    match e.value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(bad(e, "a finite number")),
    }
}

fn parse_bool(e: &Entry) -> Result<bool, ConfigError> {
    match e.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(e, "`true` or `false`")),
    }
}

/// `"4x8"` → `(4, 8)`.
pub fn parse_dims(s: &str) -> Option<(usize, usize)> {
    let (r, c) = s.split_once('x')?;
    let (r, c) = (r.trim().parse().ok()?, c.trim().parse().ok()?);
    (r > 0 && c > 0).then_some((r, c))
}

fn dims_of(e: &Entry) -> Result<(usize, usize), ConfigError> {
    parse_dims(&e.value).ok_or_else(|| bad(e, "positive dimensions like `4x4`"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Both,
    Query,
    Value,
}

fn parse_pair(section: &Section, allow_target: bool) -> Result<(Vec<PairShape>, Target), ConfigError> {
    let mut f = Fields::new(&section.entries);
    let b = dims_of(f.require("b", Some(section.line))?)?;
    let shape = match (f.take("a"), f.take("identity")) {
        (Some(a), None) => PairShape::new(dims_of(a)?, b),
        (None, Some(id)) => PairShape::identity(parse_positive(id)?, b),
        (Some(_), Some(id)) => {
            return Err(ConfigError::key(Some(id.line), "identity", "give either `a` or `identity`, not both"))
        }
        (None, None) => {
            return Err(ConfigError::key(Some(section.line), "a", "missing `a` (or `identity`)"))
        }
    };
    let repeat = match f.take("repeat") {
        Some(e) => parse_positive(e)?,
        None => 1,
    };
    let target = match (allow_target, f.take("projection")) {
        (_, None) => Target::Both,
        (true, Some(e)) => match e.value.as_str() {
            "q" => Target::Query,
            "v" => Target::Value,
            _ => return Err(bad(e, "`q` or `v`")),
        },
        (false, Some(e)) => return Err(ConfigError::key(Some(e.line), &e.key, "unknown key")),
    };
    f.finish()?;
    Ok((vec![shape; repeat], target))
}

fn check_pairs(pairs: &[PairShape], m: usize, n: usize, line: usize) -> Result<(), ConfigError> {
    if pairs.is_empty() {
        return Err(ConfigError::at(line, "at least one [pair] section is required"));
    }
    for (i, p) in pairs.iter().enumerate() {
        if let Some(reason) = p.violations(m, n).into_iter().next() {
            return Err(ConfigError::at(line, format!("pair {i} cannot serve a {m}x{n} layer: {reason}")));
        }
    }
    Ok(())
}

/// Everything `train` needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRunConfig {
    pub train: TrainConfig,
    pub gate_mode: GateMode,
    pub reproducible: bool,
    pub task: TaskSpec,
}

impl TrainRunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw = parse_raw(text)?;
        if let Some(s) = raw.sections.iter().find(|s| s.kind == SectionKind::Projection) {
            return Err(ConfigError::at(s.line, "[projection] sections belong in model files"));
        }
        let mut f = Fields::new(&raw.top);
        let eta_e = f.require("eta", None)?;
        let eta = parse_f64(eta_e)?;
        if eta <= 0.0 {
            return Err(ConfigError::key(Some(eta_e.line), "eta", format!("must be positive, got {eta}")));
        }
        let steps = parse_positive(f.require("steps", None)?)?;
        let batch = match f.take("batch") {
            None => BatchMode::Sampled(DEFAULT_BATCH),
            Some(e) if e.value == "full" => BatchMode::Full,
            Some(e) => BatchMode::Sampled(parse_positive(e).map_err(|_| bad(e, "`full` or a positive size"))?),
        };
        let record_every = f.take("record_every").map(parse_positive).transpose()?.unwrap_or(1);
        let seed = match f.take("seed") {
            Some(e) => e.value.parse().map_err(|_| bad(e, "an unsigned 64-bit integer"))?,
            None => 0,
        };
        let reproducible = f.take("reproducible").map(parse_bool).transpose()?.unwrap_or(false);
        let gate_mode = match f.take("gate_mode") {
            None => GateMode::Learned,
            Some(e) => match e.value.as_str() {
                "learned" => GateMode::Learned,
                "uniform" => GateMode::Uniform,
                _ => return Err(bad(e, "`learned` or `uniform`")),
            },
        };
        let task_e = f.require("task", None)?;
        let is_attention = task_e.value == "toy_attention";
        let mut q_pairs = Vec::new();
        let mut v_pairs = Vec::new();
        let mut first_section = 1;
        for (k, s) in raw.sections.iter().enumerate() {
            if k == 0 {
                first_section = s.line;
            }
            let (shapes, target) = parse_pair(s, is_attention)?;
            if target != Target::Value {
                q_pairs.extend_from_slice(&shapes);
            }
            if target != Target::Query {
                v_pairs.extend_from_slice(&shapes);
            }
        }
        let task = match task_e.value.as_str() {
            "planted" | "frozen_linear" => {
                let m = parse_positive(f.require("m", None)?)?;
                let n = parse_positive(f.require("n", None)?)?;
                let probes = f.take("probes").map(parse_positive).transpose()?.unwrap_or(DEFAULT_PROBES);
                check_pairs(&q_pairs, m, n, first_section)?;
                let layout = ProjectionShape {
                    name: "w".into(),
                    out_dim: m,
                    in_dim: n,
                    pairs: q_pairs,
                };
                if task_e.value == "planted" {
                    TaskSpec::Planted { layout, probes }
                } else {
                    let rho_e = f.require("rho", None)?;
                    let rho = parse_f64(rho_e)?;
                    if rho < 0.0 {
                        return Err(ConfigError::key(Some(rho_e.line), "rho", "must be non-negative"));
                    }
                    TaskSpec::FrozenLinear { layout, rho, probes }
                }
            }
            "toy_attention" => {
                let seq_len = parse_positive(f.require("seq_len", None)?)?;
                let dim = parse_positive(f.require("dim", None)?)?;
                let pool = f.take("pool").map(parse_positive).transpose()?.unwrap_or(DEFAULT_PROBES);
                check_pairs(&q_pairs, dim, dim, first_section)?;
                check_pairs(&v_pairs, dim, dim, first_section)?;
                TaskSpec::ToyAttention {
                    seq_len,
                    dim,
                    q_pairs,
                    v_pairs,
                    pool,
                }
            }
            _ => return Err(bad(task_e, "`planted`, `frozen_linear` or `toy_attention`")),
        };
        f.finish()?;
        Ok(Self {
            train: TrainConfig {
                eta,
                steps,
                batch,
                seed,
                record_every,
            },
            gate_mode,
            reproducible,
            task,
        })
    }

    /// Config text that parses back to `self`.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        kv("task", self.task.name().to_string());
        kv("eta", format!("{:?}", self.train.eta));
        kv("steps", self.train.steps.to_string());
        kv(
            "batch",
            match self.train.batch {
                BatchMode::Full => "full".to_string(),
                BatchMode::Sampled(b) => b.to_string(),
            },
        );
        kv("record_every", self.train.record_every.to_string());
        kv("seed", self.train.seed.to_string());
        kv("reproducible", self.reproducible.to_string());
        kv(
            "gate_mode",
            match self.gate_mode {
                GateMode::Learned => "learned",
                GateMode::Uniform => "uniform",
            }
            .to_string(),
        );
        let mut sections = Vec::new();
        match &self.task {
            TaskSpec::Planted { layout, probes } => {
                kv("m", layout.out_dim.to_string());
                kv("n", layout.in_dim.to_string());
                kv("probes", probes.to_string());
                sections.extend(layout.pairs.iter().map(|p| (*p, None)));
            }
            TaskSpec::FrozenLinear { layout, rho, probes } => {
                kv("m", layout.out_dim.to_string());
                kv("n", layout.in_dim.to_string());
                kv("rho", format!("{rho:?}"));
                kv("probes", probes.to_string());
                sections.extend(layout.pairs.iter().map(|p| (*p, None)));
            }
            TaskSpec::ToyAttention {
                seq_len,
                dim,
                q_pairs,
                v_pairs,
                pool,
            } => {
                kv("seq_len", seq_len.to_string());
                kv("dim", dim.to_string());
                kv("pool", pool.to_string());
                if q_pairs == v_pairs {
                    sections.extend(q_pairs.iter().map(|p| (*p, None)));
                } else {
                    sections.extend(q_pairs.iter().map(|p| (*p, Some("q"))));
                    sections.extend(v_pairs.iter().map(|p| (*p, Some("v"))));
                }
            }
        }
        for (p, target) in sections {
            out.push_str("\n[pair]\n");
            out.push_str(&pair_lines(&p));
            if let Some(t) = target {
                out.push_str(&format!("projection = {t}\n"));
            }
        }
        out
    }
}

fn pair_lines(p: &PairShape) -> String {
    let a = if p.identity_a {
        format!("identity = {}\n", p.a_cols)
    } else {
        format!("a = {}x{}\n", p.a_rows, p.a_cols)
    };
    format!("{a}b = {}x{}\n", p.b_rows, p.b_cols)
}

/// Custom model description for `count`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub layers: usize,
    pub projections: Vec<ProjectionShape>,
}

impl ModelConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw = parse_raw(text)?;
        let mut f = Fields::new(&raw.top);
        let layers = parse_positive(f.require("layers", None)?)?;
        f.finish()?;
        let mut projections: Vec<ProjectionShape> = Vec::new();
        for s in &raw.sections {
            match s.kind {
                SectionKind::Projection => {
                    let mut f = Fields::new(&s.entries);
                    let name = f.require("name", Some(s.line))?.value.clone();
                    let out_dim = parse_positive(f.require("m", Some(s.line))?)?;
                    let in_dim = parse_positive(f.require("n", Some(s.line))?)?;
                    f.finish()?;
                    projections.push(ProjectionShape {
                        name,
                        out_dim,
                        in_dim,
                        pairs: Vec::new(),
                    });
                }
                SectionKind::Pair => {
                    let proj = projections
                        .last_mut()
                        .ok_or_else(|| ConfigError::at(s.line, "[pair] before any [projection]"))?;
                    let (shapes, _) = parse_pair(s, false)?;
                    proj.pairs.extend(shapes);
                }
            }
        }
        if projections.is_empty() {
            return Err(ConfigError::new("model file needs at least one [projection]"));
        }
        Ok(Self { layers, projections })
    }

    pub fn to_config_string(&self) -> String {
        let mut out = format!("layers = {}\n", self.layers);
        for p in &self.projections {
            out.push_str(&format!("\n[projection]\nname = {}\nm = {}\nn = {}\n", p.name, p.out_dim, p.in_dim));
            for pair in &p.pairs {
                out.push_str("\n[pair]\n");
                out.push_str(&pair_lines(pair));
            }
        }
        out
    }
}
