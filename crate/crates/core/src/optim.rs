//! AdamW restricted to the selected blocks, with optimizer-state residency
//! tracking and the optimizer-memory identities
//!
//! ```text
//! mem_full      = 2 * p_total    * bytes_per_param
//! mem_selective = 2 * p_selected * bytes_per_param
//! ```
//!
//! where the factor 2 counts the first and second moments. Residency is
//! modeled: moving a block between tiers is a bookkeeping change with a byte
//! cost, the moments themselves stay in place and are never reset.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad_select::BlockSet;
use crate::model::{ParamId, ParamTensor};
use crate::partition::{BlockId, BlockPartition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::config("beta1", "must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("beta2", "must be in [0, 1)"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::config("eps", "must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Residency {
    Host,
    Device,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferKind {
    Prefetch,
    Evict,
    Retain,
}

impl fmt::Display for TransferKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransferKind::Prefetch => "prefetch",
            TransferKind::Evict => "evict",
            TransferKind::Retain => "retain",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub block: BlockId,
    pub kind: TransferKind,
    pub bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferLog {
    pub transfers: Vec<Transfer>,
}

impl TransferLog {
    fn bytes_of(&self, kind: TransferKind) -> u64 {
        self.transfers
            .iter()
            .filter(|t| t.kind == kind)
            .map(|t| t.bytes)
            .sum()
    }

    pub fn prefetch_bytes(&self) -> u64 {
        self.bytes_of(TransferKind::Prefetch)
    }

    pub fn evict_bytes(&self) -> u64 {
        self.bytes_of(TransferKind::Evict)
    }

    pub fn blocks(&self, kind: TransferKind) -> BlockSet {
        self.transfers
            .iter()
            .filter(|t| t.kind == kind)
            .map(|t| t.block)
            .collect()
    }
}

/// Optimizer-state bytes for a block: two moments per parameter.
pub fn block_state_bytes(partition: &BlockPartition, block: BlockId, bytes_per_param: usize) -> u64 {
    2 * partition.block_param_count(block).unwrap_or(0) as u64 * bytes_per_param as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveAdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    updates: Vec<u64>,
    residency: BTreeMap<BlockId, Residency>,
    bytes_per_param: usize,
}

impl SelectiveAdamState {
    /// Zeroed moments for every parameter; every block starts host-resident.
    pub fn new(params: &[ParamTensor], partition: &BlockPartition, bytes_per_param: usize) -> Self {
        Self {
            first: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            updates: vec![0; params.len()],
            residency: partition
                .blocks()
                .iter()
                .map(|&b| (b, Residency::Host))
                .collect(),
            bytes_per_param,
        }
    }

    pub fn bytes_per_param(&self) -> usize {
        self.bytes_per_param
    }

    pub fn first_moment(&self, id: ParamId) -> &[f64] {
        &self.first[id.0]
    }

    pub fn second_moment(&self, id: ParamId) -> &[f64] {
        &self.second[id.0]
    }

    /// Number of updates applied to a parameter; drives its bias correction.
    pub fn update_count(&self, id: ParamId) -> u64 {
        self.updates[id.0]
    }

    pub fn residency(&self, block: BlockId) -> Option<Residency> {
        self.residency.get(&block).copied()
    }

    pub fn device_blocks(&self) -> BlockSet {
        self.residency
            .iter()
            .filter(|(_, r)| **r == Residency::Device)
            .map(|(b, _)| *b)
            .collect()
    }

    pub fn device_bytes(&self, partition: &BlockPartition) -> u64 {
        self.device_blocks()
            .into_iter()
            .map(|b| block_state_bytes(partition, b, self.bytes_per_param))
            .sum()
    }

    /// Moves optimizer state so that exactly the `selected` blocks are
    /// device-resident. Blocks already resident are retained at no cost.
    pub fn ensure_residency(&mut self, selected: &BlockSet, partition: &BlockPartition) -> TransferLog {
        let mut log = TransferLog::default();
        for (&block, tier) in self.residency.iter_mut() {
            let bytes = block_state_bytes(partition, block, self.bytes_per_param);
            let kind = match (*tier, selected.contains(&block)) {
                (Residency::Host, true) => TransferKind::Prefetch,
                (Residency::Device, false) => TransferKind::Evict,
                (Residency::Device, true) => TransferKind::Retain,
                (Residency::Host, false) => continue,
            };
            *tier = if selected.contains(&block) {
                Residency::Device
            } else {
                Residency::Host
            };
            log.transfers.push(Transfer {
                block,
                kind,
                bytes: if kind == TransferKind::Retain { 0 } else { bytes },
            });
        }
        log
    }
}

/// AdamW on the parameters of `selected` blocks only. Everything else
/// (values, moments, update counters) is left untouched.
pub fn adamw_step(
    params: &mut [ParamTensor],
    state: &mut SelectiveAdamState,
    cfg: &AdamWConfig,
    selected: &BlockSet,
    partition: &BlockPartition,
) -> Result<()> {
    for &block in selected {
        match state.residency(block) {
            Some(Residency::Device) => {}
            Some(Residency::Host) => {
                return Err(Error::Residency {
                    block: block.to_string(),
                })
            }
            None => return Err(Error::UnknownBlock(block.to_string())),
        }
    }
    let targets: Vec<ParamId> = selected
        .iter()
        .map(|&b| partition.params_in(b).map(<[ParamId]>::to_vec))
        .collect::<Result<Vec<_>>>()?
        .concat();
    for id in &targets {
        if params[id.0].grad.is_none() {
            return Err(Error::State(format!(
                "parameter `{}` has no gradient",
                params[id.0].name
            )));
        }
    }

    for id in targets {
        let p = &mut params[id.0];
        let grad = p.grad.as_ref().expect("checked above");
        let m = &mut state.first[id.0];
        let v = &mut state.second[id.0];
        state.updates[id.0] += 1;
        let t = state.updates[id.0] as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..p.values.len() {
            let g = grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            let w = p.values[i];
            p.values[i] = w - cfg.lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * w);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub p_total: u64,
    pub p_selected: u64,
    pub bytes_per_param: u64,
    pub mem_full: u64,
    pub mem_selective: u64,
    pub mem_saved: u64,
    pub percent_reduction: f64,
}

/// Optimizer-state memory for `selected` against the full trainable set.
/// `p_total` counts the selection pool, i.e. every parameter the run may update.
pub fn memory_report(partition: &BlockPartition, selected: &BlockSet, bytes_per_param: usize) -> MemoryReport {
    let p_total = partition.pool_param_count() as u64;
    let p_selected = partition.param_count_of(selected) as u64;
    let b = bytes_per_param as u64;
    let mem_full = 2 * p_total * b;
    let mem_selective = 2 * p_selected * b;
    MemoryReport {
        p_total,
        p_selected,
        bytes_per_param: b,
        mem_full,
        mem_selective,
        mem_saved: mem_full.saturating_sub(mem_selective),
        percent_reduction: (1.0 - p_selected as f64 / p_total as f64) * 100.0,
    }
}
