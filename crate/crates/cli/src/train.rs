//! `train`: run SGD on a configured task and write `train.csv` and
//! `bound.json`.

use std::io::Write;
use std::path::Path;

use moka_core::adapter::MixtureAdapter;
use moka_core::tasks::{make_frozen_linear, make_planted, make_toy_attention, TaskSpec};
use moka_core::trainer::{
    convergence_diagnostic, parameter_smoothness, run_training, BatchMode, BoundInputs, BoundReport,
    Objective, TrainConfig, TrainOutcome,
};

use crate::config::TrainRunConfig;
use crate::error::CliError;
use crate::metrics::{to_json, Cell, MetricTable, TRAIN_COLUMNS};

/// Power-iteration steps for smoothness estimates.
const SMOOTHNESS_ITERS: usize = 200;
/// The reference run for the minimum loss is this many times longer.
const LONG_HORIZON: usize = 4;

#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub csv: String,
    pub bound_json: String,
    pub report: BoundReport,
    pub final_loss: f64,
}

fn run_objective<O: Objective>(
    objective: &O,
    adapters: Vec<MixtureAdapter>,
    cfg: &TrainConfig,
) -> Result<(TrainOutcome, BoundInputs), CliError> {
    let full = objective.full_batch();
    let initial = objective.loss(&adapters, full)?;
    let smoothness = match objective.smoothness() {
        Some(l) => l,
        None => parameter_smoothness(objective, &adapters, full, SMOOTHNESS_ITERS, cfg.seed)?,
    };
    let outcome = run_training(cfg, objective, adapters.clone())?;
    let min_loss = match objective.known_min() {
        Some(v) => v,
        None => {
            let long = TrainConfig {
                steps: cfg.steps * LONG_HORIZON,
                batch: BatchMode::Full,
                record_every: cfg.steps * LONG_HORIZON,
                ..cfg.clone()
            };
            let final_full = objective.loss(&outcome.adapters, full)?;
            let reference = run_training(&long, objective, adapters)
                .map(|o| o.best_loss)
                .unwrap_or(f64::INFINITY);
            reference.min(final_full).min(initial)
        }
    };
    let inputs = BoundInputs {
        gap: (initial - min_loss).max(0.0),
        smoothness,
        grad_bound: outcome.max_factor_bound_term,
        eta: cfg.eta,
    };
    Ok((outcome, inputs))
}

fn with_mode(adapters: Vec<MixtureAdapter>, cfg: &TrainRunConfig) -> Vec<MixtureAdapter> {
    adapters.into_iter().map(|a| a.with_gate_mode(cfg.gate_mode)).collect()
}

/// Builds the task, trains, and renders both output files.
pub fn execute_train(cfg: &TrainRunConfig) -> Result<TrainArtifacts, CliError> {
    let seed = cfg.train.seed;
    let (outcome, inputs) = match &cfg.task {
        TaskSpec::Planted { layout, probes } => {
            let task = make_planted(layout, seed, *probes)?;
            let adapters = with_mode(vec![task.init_adapter(seed)?], cfg);
            run_objective(&task, adapters, &cfg.train)?
        }
        TaskSpec::FrozenLinear { layout, rho, probes } => {
            let task = make_frozen_linear(layout.out_dim, layout.in_dim, *rho, seed, *probes)?;
            let adapters = with_mode(vec![task.init_adapter(&layout.pairs, seed)?], cfg);
            run_objective(&task, adapters, &cfg.train)?
        }
        TaskSpec::ToyAttention {
            seq_len,
            dim,
            q_pairs,
            v_pairs,
            pool,
        } => {
            let task = make_toy_attention(*seq_len, *dim, q_pairs, v_pairs, seed, *pool)?;
            let adapters = with_mode(task.init_adapters(seed)?, cfg);
            run_objective(&task, adapters, &cfg.train)?
        }
    };
    let report = convergence_diagnostic(&outcome.records, inputs)?;
    let mut table = MetricTable::new(TRAIN_COLUMNS);
    for r in &outcome.records {
        table.push(vec![
            Cell::Int(r.step as u64),
            Cell::Float(r.loss),
            Cell::Float(r.grad_norm_sq),
            Cell::Float(r.mean_grad_norm_sq),
            Cell::Float(r.factor_bound_term),
        ]);
    }
    let bound_json = to_json(&report).map_err(|e| CliError::Failure(format!("bound report: {e}")))?;
    let final_loss = outcome.records.last().map_or(f64::NAN, |r| r.loss);
    Ok(TrainArtifacts {
        csv: table.to_csv_string(),
        bound_json,
        report,
        final_loss,
    })
}

pub fn cmd_train(config_path: &Path, out_dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config_path).map_err(|e| CliError::io(config_path.display(), e))?;
    let cfg = TrainRunConfig::parse(&text)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir.display(), e))?;
    let art = execute_train(&cfg)?;
    let csv_path = out_dir.join("train.csv");
    let json_path = out_dir.join("bound.json");
    std::fs::write(&csv_path, &art.csv).map_err(|e| CliError::io(csv_path.display(), e))?;
    std::fs::write(&json_path, &art.bound_json).map_err(|e| CliError::io(json_path.display(), e))?;
    let r = &art.report;
    let verdict = if r.violated { "exceeded" } else { "respected" };
    writeln!(
        out,
        "task={} steps={} final_loss={:.6e}\nbound {verdict}: measured_avg={:.6e} bound={:.6e} (gap={:.6e} L={:.6e} G={:.6e} eta={:.6e} eta*={:.6e})\nwrote {} and {}",
        cfg.task.name(),
        r.steps,
        art.final_loss,
        r.measured_avg,
        r.bound,
        r.gap,
        r.smoothness,
        r.grad_bound,
        r.eta,
        r.eta_star,
        csv_path.display(),
        json_path.display(),
    )
    .map_err(|e| CliError::io("stdout", e))?;
    Ok(())
}
