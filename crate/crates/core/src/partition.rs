//! Assignment of parameter tensors to update blocks.
//!
//! A block is the unit of selection: the token embedding, each transformer
//! block, the final norm and the output head. Blocks order by their global
//! ordinal (`Embedding = 0`, `Transformer(i) = 1 + i`, `FinalNorm = 1 + n`,
//! `Head = 2 + n`), which is also the derived `Ord`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ParamId, ParamTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BlockId {
    Embedding,
    Transformer(usize),
    FinalNorm,
    Head,
}

impl BlockId {
    pub fn ordinal(self, n_blocks: usize) -> usize {
        match self {
            BlockId::Embedding => 0,
            BlockId::Transformer(i) => 1 + i,
            BlockId::FinalNorm => 1 + n_blocks,
            BlockId::Head => 2 + n_blocks,
        }
    }

    pub fn from_ordinal(ordinal: usize, n_blocks: usize) -> Option<Self> {
        match ordinal {
            0 => Some(BlockId::Embedding),
            o if o <= n_blocks => Some(BlockId::Transformer(o - 1)),
            o if o == n_blocks + 1 => Some(BlockId::FinalNorm),
            o if o == n_blocks + 2 => Some(BlockId::Head),
            _ => None,
        }
    }

    pub fn is_transformer(self) -> bool {
        matches!(self, BlockId::Transformer(_))
    }

    /// Block owning a parameter, inferred from the parameter's dotted name.
    pub fn for_param_name(name: &str) -> Option<Self> {
        let mut parts = name.split('.');
        match parts.next()? {
            "embed" => Some(BlockId::Embedding),
            "block" => parts.next()?.parse().ok().map(BlockId::Transformer),
            "final_norm" => Some(BlockId::FinalNorm),
            "head" => Some(BlockId::Head),
            _ => None,
        }
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockId::Embedding => f.write_str("embed"),
            BlockId::Transformer(i) => write!(f, "block.{i}"),
            BlockId::FinalNorm => f.write_str("final_norm"),
            BlockId::Head => f.write_str("head"),
        }
    }
}

impl FromStr for BlockId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "embed" => Ok(BlockId::Embedding),
            "final_norm" => Ok(BlockId::FinalNorm),
            "head" => Ok(BlockId::Head),
            _ => s
                .strip_prefix("block.")
                .and_then(|i| i.parse().ok())
                .map(BlockId::Transformer)
                .ok_or_else(|| Error::UnknownBlock(s.to_string())),
        }
    }
}

impl Serialize for BlockId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BlockId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    n_blocks: usize,
    blocks: Vec<BlockId>,
    assignment: Vec<BlockId>,
    members: BTreeMap<BlockId, Vec<ParamId>>,
    counts: BTreeMap<BlockId, usize>,
    pool: Vec<BlockId>,
}

/// Groups `params` into blocks. With `include_auxiliary` false the selection
/// pool holds only the transformer blocks; otherwise every block is eligible.
pub fn build_partition(
    params: &[ParamTensor],
    config: &ModelConfig,
    include_auxiliary: bool,
) -> Result<BlockPartition> {
    config.validate()?;
    let n = config.n_blocks;
    let blocks: Vec<BlockId> = (0..n + 3)
        .map(|o| BlockId::from_ordinal(o, n).expect("dense ordinals"))
        .collect();

    let mut assignment = Vec::with_capacity(params.len());
    let mut members: BTreeMap<BlockId, Vec<ParamId>> = BTreeMap::new();
    let mut counts: BTreeMap<BlockId, usize> = blocks.iter().map(|&b| (b, 0)).collect();
    for (idx, p) in params.iter().enumerate() {
        if p.id != ParamId(idx) {
            return Err(Error::Input(format!(
                "parameter `{}` has id {} at position {idx}",
                p.name, p.id.0
            )));
        }
        let block = BlockId::for_param_name(&p.name)
            .filter(|b| counts.contains_key(b))
            .ok_or_else(|| Error::OrphanParameter {
                param: p.name.clone(),
            })?;
        assignment.push(block);
        members.entry(block).or_default().push(p.id);
        *counts.get_mut(&block).expect("known block") += p.numel();
    }

    if let Some(empty) = blocks.iter().find(|b| !members.contains_key(b)) {
        return Err(Error::State(format!("block `{empty}` has no parameters")));
    }

    let pool = if include_auxiliary {
        blocks.clone()
    } else {
        blocks.iter().copied().filter(|b| b.is_transformer()).collect()
    };

    Ok(BlockPartition {
        n_blocks: n,
        blocks,
        assignment,
        members,
        counts,
        pool,
    })
}

impl BlockPartition {
    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    /// All blocks in ordinal order.
    pub fn blocks(&self) -> &[BlockId] {
        &self.blocks
    }

    /// Blocks eligible for selection, in ordinal order.
    pub fn pool(&self) -> &[BlockId] {
        &self.pool
    }

    pub fn selectable_count(&self) -> usize {
        self.pool.len()
    }

    pub fn total_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_of(&self, param: ParamId) -> Option<BlockId> {
        self.assignment.get(param.0).copied()
    }

    pub fn params_in(&self, block: BlockId) -> Result<&[ParamId]> {
        self.members
            .get(&block)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownBlock(block.to_string()))
    }

    pub fn block_param_count(&self, block: BlockId) -> Result<usize> {
        self.counts
            .get(&block)
            .copied()
            .ok_or_else(|| Error::UnknownBlock(block.to_string()))
    }

    pub fn contains(&self, block: BlockId) -> bool {
        self.counts.contains_key(&block)
    }

    pub fn ordinal(&self, block: BlockId) -> usize {
        block.ordinal(self.n_blocks)
    }

    pub fn total_param_count(&self) -> usize {
        self.counts.values().sum()
    }

    /// Parameters in the selection pool, i.e. the trainable parameters.
    pub fn pool_param_count(&self) -> usize {
        self.pool.iter().map(|b| self.counts[b]).sum()
    }

    pub fn param_count_of<'a>(&self, blocks: impl IntoIterator<Item = &'a BlockId>) -> usize {
        blocks
            .into_iter()
            .map(|b| self.counts.get(b).copied().unwrap_or(0))
            .sum()
    }
}
