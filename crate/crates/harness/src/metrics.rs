//! Per-step metrics rows, run summaries, and their on-disk forms
//! (`metrics.csv` and `summary.json`).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use blockwise::{BlockId, MemoryReport};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub const CSV_COLUMNS: [&str; 10] = [
    "step",
    "epoch",
    "loss",
    "decision",
    "epsilon",
    "selected",
    "device_opt_bytes",
    "prefetch_bytes",
    "evict_bytes",
    "wall_ms",
];

/// How a step's blocks were chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepDecision {
    Explore,
    Exploit,
    Full,
    TopK,
    Random,
}

impl StepDecision {
    pub fn as_str(self) -> &'static str {
        match self {
            StepDecision::Explore => "explore",
            StepDecision::Exploit => "exploit",
            StepDecision::Full => "full",
            StepDecision::TopK => "topk",
            StepDecision::Random => "random",
        }
    }
}

impl fmt::Display for StepDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<blockwise::Decision> for StepDecision {
    fn from(d: blockwise::Decision) -> Self {
        match d {
            blockwise::Decision::Explore => StepDecision::Explore,
            blockwise::Decision::Exploit => StepDecision::Exploit,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub step: u64,
    pub epoch: u32,
    pub loss: f64,
    pub decision: StepDecision,
    pub epsilon: f64,
    /// Ordinal order.
    pub selected: Vec<BlockId>,
    pub device_opt_bytes: u64,
    pub prefetch_bytes: u64,
    pub evict_bytes: u64,
    pub wall_ms: f64,
}

// Flat record matching the CSV column order.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    step: u64,
    epoch: u32,
    loss: f64,
    decision: StepDecision,
    epsilon: f64,
    selected: String,
    device_opt_bytes: u64,
    prefetch_bytes: u64,
    evict_bytes: u64,
    wall_ms: f64,
}

impl From<&StepRow> for CsvRow {
    fn from(r: &StepRow) -> Self {
        CsvRow {
            step: r.step,
            epoch: r.epoch,
            loss: r.loss,
            decision: r.decision,
            epsilon: r.epsilon,
            selected: join_blocks(&r.selected),
            device_opt_bytes: r.device_opt_bytes,
            prefetch_bytes: r.prefetch_bytes,
            evict_bytes: r.evict_bytes,
            wall_ms: (r.wall_ms * 1000.0).round() / 1000.0,
        }
    }
}

impl TryFrom<CsvRow> for StepRow {
    type Error = HarnessError;

    fn try_from(r: CsvRow) -> Result<Self> {
        Ok(StepRow {
            step: r.step,
            epoch: r.epoch,
            loss: r.loss,
            decision: r.decision,
            epsilon: r.epsilon,
            selected: split_blocks(&r.selected)?,
            device_opt_bytes: r.device_opt_bytes,
            prefetch_bytes: r.prefetch_bytes,
            evict_bytes: r.evict_bytes,
            wall_ms: r.wall_ms,
        })
    }
}

pub fn join_blocks(blocks: &[BlockId]) -> String {
    blocks
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

pub fn split_blocks(s: &str) -> Result<Vec<BlockId>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|b| BlockId::from_str(b).map_err(HarnessError::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub pool: Vec<BlockId>,
    pub selection_size: usize,
    pub total_steps: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub mean_loss_last_10pct: f64,
    /// Loss of the trained model on held-out batches.
    pub eval_loss: f64,
    pub mean_device_opt_bytes: f64,
    pub total_prefetch_bytes: u64,
    pub total_evict_bytes: u64,
    /// Optimizer-state accounting for the final step's selection.
    pub memory: MemoryReport,
    pub total_wall_ms: f64,
    pub frequencies: BTreeMap<BlockId, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub rows: Vec<StepRow>,
    pub summary: RunSummary,
}

impl RunMetrics {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        write_rows(&dir.join(METRICS_FILE), &self.rows)?;
        let summary_path = dir.join(SUMMARY_FILE);
        let json = serde_json::to_string_pretty(&self.summary)?;
        std::fs::write(&summary_path, json + "\n").map_err(|e| HarnessError::io(&summary_path, e))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let rows = read_rows(&dir.join(METRICS_FILE))?;
        let summary_path = dir.join(SUMMARY_FILE);
        let text =
            std::fs::read_to_string(&summary_path).map_err(|e| HarnessError::io(&summary_path, e))?;
        let summary = serde_json::from_str(&text)?;
        Ok(Self { rows, summary })
    }
}

pub fn write_rows(path: &Path, rows: &[StepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(CsvRow::from(row))?;
    }
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<StepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(HarnessError::Config(format!(
            "{}: unexpected columns {:?}",
            path.display(),
            headers
        )));
    }
    r.deserialize::<CsvRow>()
        .map(|row| StepRow::try_from(row?))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEntry {
    pub block: BlockId,
    pub count: u64,
    /// Fraction of all selections that went to this block.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub total_steps: u64,
    pub selection_size: usize,
    pub entries: Vec<FrequencyEntry>,
}

impl FrequencyReport {
    pub fn total_selections(&self) -> u64 {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn count(&self, block: BlockId) -> u64 {
        self.entries
            .iter()
            .find(|e| e.block == block)
            .map_or(0, |e| e.count)
    }
}

/// Per-block selection counts, recounted from the step rows.
pub fn frequency_report(metrics: &RunMetrics) -> FrequencyReport {
    let mut counts: BTreeMap<BlockId, u64> =
        metrics.summary.pool.iter().map(|&b| (b, 0)).collect();
    for row in &metrics.rows {
        for b in &row.selected {
            *counts.entry(*b).or_insert(0) += 1;
        }
    }
    let total: u64 = counts.values().sum();
    let entries = counts
        .into_iter()
        .map(|(block, count)| FrequencyEntry {
            block,
            count,
            share: if total == 0 {
                0.0
            } else {
                count as f64 / total as f64
            },
        })
        .collect();
    FrequencyReport {
        total_steps: metrics.rows.len() as u64,
        selection_size: metrics.summary.selection_size,
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64, selected: Vec<BlockId>) -> StepRow {
        StepRow {
            step,
            epoch: 1,
            loss: 1.25,
            decision: StepDecision::Explore,
            epsilon: 0.5,
            selected,
            device_opt_bytes: 10,
            prefetch_bytes: 10,
            evict_bytes: 0,
            wall_ms: 1.23456,
        }
    }

    #[test]
    fn block_list_format() {
        let blocks = vec![BlockId::Transformer(3), BlockId::Transformer(0)];
        assert_eq!(join_blocks(&blocks), "block.3;block.0");
        assert_eq!(split_blocks("block.3;block.0").unwrap(), blocks);
        assert!(split_blocks("").unwrap().is_empty());
        assert!(split_blocks("block.3;bogus").is_err());
    }

    #[test]
    fn csv_header_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(METRICS_FILE);
        let rows = vec![
            row(0, vec![BlockId::Transformer(1)]),
            row(1, vec![BlockId::Embedding, BlockId::Head]),
        ];
        write_rows(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
        assert!(text.contains("embed;head"));
        let back = read_rows(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].selected, rows[1].selected);
        assert_eq!(back[0].wall_ms, 1.235);
    }

    #[test]
    fn frequency_shares() {
        let summary_pool = vec![BlockId::Transformer(0)];
        let metrics = RunMetrics {
            rows: (0..4).map(|s| row(s, vec![BlockId::Transformer(0)])).collect(),
            summary: RunSummary {
                config: RunConfig::default(),
                pool: summary_pool,
                selection_size: 1,
                total_steps: 4,
                initial_loss: 1.0,
                final_loss: 1.0,
                mean_loss_last_10pct: 1.0,
                eval_loss: 1.0,
                mean_device_opt_bytes: 0.0,
                total_prefetch_bytes: 0,
                total_evict_bytes: 0,
                memory: MemoryReport {
                    p_total: 1,
                    p_selected: 1,
                    bytes_per_param: 4,
                    mem_full: 8,
                    mem_selective: 8,
                    mem_saved: 0,
                    percent_reduction: 0.0,
                },
                total_wall_ms: 0.0,
                frequencies: BTreeMap::new(),
            },
        };
        let rep = frequency_report(&metrics);
        assert_eq!(rep.total_selections(), 4);
        assert_eq!(rep.entries.len(), 1);
        assert_eq!(rep.entries[0].share, 1.0);
    }
}
