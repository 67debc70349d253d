//! Side-by-side runs that differ only in selection strategy and k.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::metrics::RunMetrics;
use crate::train::run_training;

pub const COMPARISON_CSV: &str = "comparison.csv";
pub const COMPARISON_JSON: &str = "comparison.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub run: String,
    pub strategy: String,
    pub k_percent: f64,
    pub final_loss: f64,
    pub mean_loss_last_10pct: f64,
    pub eval_loss: f64,
    pub mean_device_opt_bytes: f64,
    pub total_transfer_bytes: u64,
    pub percent_reduction: f64,
    pub wall_ms: f64,
}

impl ComparisonRow {
    pub fn from_metrics(run: impl Into<String>, metrics: &RunMetrics) -> Self {
        let s = &metrics.summary;
        ComparisonRow {
            run: run.into(),
            strategy: s.config.strategy.to_string(),
            k_percent: s.config.k_percent,
            final_loss: s.final_loss,
            mean_loss_last_10pct: s.mean_loss_last_10pct,
            eval_loss: s.eval_loss,
            mean_device_opt_bytes: s.mean_device_opt_bytes,
            total_transfer_bytes: s.total_prefetch_bytes + s.total_evict_bytes,
            percent_reduction: s.memory.percent_reduction,
            wall_ms: s.total_wall_ms,
        }
    }
}

/// Checks that the runs share everything except strategy, k and output path.
pub fn check_comparable(configs: &[RunConfig]) -> Result<()> {
    let Some(first) = configs.first() else {
        return Err(HarnessError::Comparison("no configurations given".into()));
    };
    let normalize = |c: &RunConfig| RunConfig {
        strategy: first.strategy,
        k_percent: first.k_percent,
        out_dir: first.out_dir.clone(),
        ..c.clone()
    };
    let reference = normalize(first);
    for (i, c) in configs.iter().enumerate().skip(1) {
        let n = normalize(c);
        let mismatch = [
            ("seed", n.seed != reference.seed),
            ("model", n.model != reference.model),
            ("task", n.task != reference.task),
            ("epochs", n.epochs != reference.epochs),
            ("steps_per_epoch", n.steps_per_epoch != reference.steps_per_epoch),
            ("batch_size", n.batch_size != reference.batch_size),
            ("seq_len", n.seq_len != reference.seq_len),
            ("include_auxiliary", n.include_auxiliary != reference.include_auxiliary),
        ]
        .into_iter()
        .find(|(_, differs)| *differs);
        if let Some((field, _)) = mismatch {
            return Err(HarnessError::Comparison(format!(
                "config {i} differs from config 0 in `{field}`"
            )));
        }
    }
    Ok(())
}

/// Runs every config, writes each run under `out/<index>_<strategy>` and the
/// comparison table as CSV and JSON.
pub fn compare_runs(configs: &[RunConfig], out: impl AsRef<Path>) -> Result<Vec<ComparisonRow>> {
    check_comparable(configs)?;
    let out = out.as_ref();
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let mut table = Vec::with_capacity(configs.len());
    for (i, cfg) in configs.iter().enumerate() {
        let name = format!("{i}_{}", cfg.strategy);
        let metrics = run_training(cfg)?;
        metrics.write(out.join(&name))?;
        table.push(ComparisonRow::from_metrics(name, &metrics));
    }
    write_table(out, &table)?;
    Ok(table)
}

pub fn write_table(out: &Path, table: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(out.join(COMPARISON_CSV))?;
    for row in table {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| HarnessError::io(out, e))?;
    let json_path = out.join(COMPARISON_JSON);
    let json = serde_json::to_string_pretty(table)? + "\n";
    std::fs::write(&json_path, json).map_err(|e| HarnessError::io(&json_path, e))
}
