//! Gradient-guided block selection: per-block accumulated gradient norms and
//! top-k% selection over the pool.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamTensor;
use crate::partition::{BlockId, BlockPartition};

/// Per-block sum of per-tensor gradient L2 norms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GradNormTable {
    norms: BTreeMap<BlockId, f64>,
}

impl GradNormTable {
    /// A table with every block of `partition` at zero.
    pub fn zeroed(partition: &BlockPartition) -> Self {
        Self {
            norms: partition.blocks().iter().map(|&b| (b, 0.0)).collect(),
        }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (BlockId, f64)>) -> Self {
        Self {
            norms: entries.into_iter().collect(),
        }
    }

    pub fn get(&self, block: BlockId) -> Option<f64> {
        self.norms.get(&block).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (BlockId, f64)> + '_ {
        self.norms.iter().map(|(&b, &n)| (b, n))
    }

    pub fn reset(&mut self) {
        for n in self.norms.values_mut() {
            *n = 0.0;
        }
    }

    /// Adds each tensor's gradient norm to its block's entry.
    pub fn accumulate(&mut self, params: &[ParamTensor], partition: &BlockPartition) -> Result<()> {
        for p in params {
            let grad = p.grad.as_ref().ok_or_else(|| {
                Error::State(format!("parameter `{}` has no gradient", p.name))
            })?;
            let block = partition
                .block_of(p.id)
                .ok_or_else(|| Error::OrphanParameter {
                    param: p.name.clone(),
                })?;
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            *self.norms.entry(block).or_insert(0.0) += norm;
        }
        Ok(())
    }
}

/// Fresh norm table for the gradients currently held by `params`.
pub fn accumulate_block_norms(
    params: &[ParamTensor],
    partition: &BlockPartition,
) -> Result<GradNormTable> {
    let mut table = GradNormTable::zeroed(partition);
    table.accumulate(params, partition)?;
    Ok(table)
}

/// Number of blocks to update: `max(1, floor(k * pool / 100))`.
pub fn selection_size(k_percent: f64, pool_size: usize) -> Result<usize> {
    if pool_size == 0 {
        return Err(Error::Argument("block pool is empty".into()));
    }
    if !(k_percent > 0.0 && k_percent <= 100.0) {
        return Err(Error::Argument(format!(
            "k_percent must be in (0, 100], got {k_percent}"
        )));
    }
    let m = (k_percent * pool_size as f64 / 100.0).floor() as usize;
    Ok(m.clamp(1, pool_size))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    k_percent: f64,
    pool: Vec<BlockId>,
}

impl SelectionConfig {
    pub fn new(k_percent: f64, pool: Vec<BlockId>) -> Result<Self> {
        selection_size(k_percent, pool.len())?;
        Ok(Self { k_percent, pool })
    }

    pub fn k_percent(&self) -> f64 {
        self.k_percent
    }

    pub fn pool(&self) -> &[BlockId] {
        &self.pool
    }

    pub fn selection_size(&self) -> usize {
        selection_size(self.k_percent, self.pool.len()).expect("validated on construction")
    }
}

pub type BlockSet = BTreeSet<BlockId>;

/// The `m` pool blocks with the largest norms. Ties go to the lower ordinal;
/// a pool block missing from the table counts as zero.
pub fn select_top_k(table: &GradNormTable, cfg: &SelectionConfig) -> BlockSet {
    let mut ranked: Vec<(BlockId, f64)> = cfg
        .pool
        .iter()
        .map(|&b| (b, table.get(b).unwrap_or(0.0)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
        .into_iter()
        .take(cfg.selection_size())
        .map(|(b, _)| b)
        .collect()
}
