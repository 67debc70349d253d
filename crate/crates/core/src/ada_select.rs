//! Adaptive block selection: ε-greedy mixing of gradient-norm top-k
//! (explore) with Dirichlet sampling over selection frequencies (exploit)
//! during the first epoch, and pure exploitation afterwards.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad_select::{select_top_k, selection_size, BlockSet, GradNormTable, SelectionConfig};
use crate::partition::BlockId;
use crate::stoch::{sample_dirichlet, weighted_sample_without_replacement, DirichletParams, RngState};

pub const DEFAULT_EPSILON_END: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaConfig {
    pub k_percent: f64,
    /// Additive prior on the frequency counts.
    pub delta: f64,
    pub epsilon0: f64,
    /// Exponential decay rate of ε per step.
    pub lambda: f64,
    pub steps_per_epoch: usize,
    /// Always explore on the very first step.
    pub force_first_explore: bool,
}

impl AdaConfig {
    /// Defaults: δ = 1, ε₀ = 1, and λ chosen so ε reaches 0.01 at the end of epoch 1.
    pub fn new(k_percent: f64, steps_per_epoch: usize) -> Result<Self> {
        let lambda = default_lambda(1.0, DEFAULT_EPSILON_END, steps_per_epoch)?;
        let cfg = Self {
            k_percent,
            delta: 1.0,
            epsilon0: 1.0,
            lambda,
            steps_per_epoch,
            force_first_explore: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_percent > 0.0 && self.k_percent <= 100.0) {
            return Err(Error::config("k_percent", "must be in (0, 100]"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::config("delta", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.epsilon0) {
            return Err(Error::config("epsilon0", "must be in [0, 1]"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", "must be non-negative"));
        }
        if self.steps_per_epoch == 0 {
            return Err(Error::config("steps_per_epoch", "must be positive"));
        }
        Ok(())
    }
}

/// `ε₀ · exp(−λ t)`
pub fn epsilon_at(t: u64, cfg: &AdaConfig) -> f64 {
    cfg.epsilon0 * (-cfg.lambda * t as f64).exp()
}

/// Decay rate that brings ε from `epsilon0` to `epsilon_end` over one epoch.
pub fn default_lambda(epsilon0: f64, epsilon_end: f64, steps_per_epoch: usize) -> Result<f64> {
    if !(epsilon_end > 0.0 && epsilon_end < epsilon0) {
        return Err(Error::Argument(format!(
            "need 0 < epsilon_end < epsilon0, got {epsilon_end} and {epsilon0}"
        )));
    }
    if steps_per_epoch == 0 {
        return Err(Error::Argument("steps_per_epoch must be positive".into()));
    }
    Ok((epsilon0 / epsilon_end).ln() / steps_per_epoch as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Explore,
    Exploit,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Explore => "explore",
            Decision::Exploit => "exploit",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub step: u64,
    pub epoch: u32,
    pub decision: Decision,
    pub epsilon: f64,
    pub selected: BlockSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorState {
    freq: BTreeMap<BlockId, u64>,
    step: u64,
    epoch: u32,
    rng: RngState,
    last_decision: Option<Decision>,
}

impl SelectorState {
    pub fn new(pool: &[BlockId], rng: RngState) -> Self {
        Self {
            freq: pool.iter().map(|&b| (b, 0)).collect(),
            step: 0,
            epoch: 1,
            rng,
            last_decision: None,
        }
    }

    pub fn frequencies(&self) -> &BTreeMap<BlockId, u64> {
        &self.freq
    }

    pub fn frequency(&self, block: BlockId) -> u64 {
        self.freq.get(&block).copied().unwrap_or(0)
    }

    /// Global step counter; never reset.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn last_decision(&self) -> Option<Decision> {
        self.last_decision
    }

    /// Overwrites the frequency counts, e.g. to start from a known history.
    pub fn set_frequencies(&mut self, freq: impl IntoIterator<Item = (BlockId, u64)>) {
        for (b, f) in freq {
            self.freq.insert(b, f);
        }
    }

    pub fn advance_epoch(&mut self) {
        self.epoch += 1;
    }

    /// One selection step. `norms` is only read when exploring.
    pub fn select_blocks(
        &mut self,
        cfg: &AdaConfig,
        norms: &GradNormTable,
        pool: &[BlockId],
    ) -> Result<(BlockSet, SelectionRecord)> {
        if pool.is_empty() {
            return Err(Error::State("selection pool is empty".into()));
        }
        let m = selection_size(cfg.k_percent, pool.len())?;
        let t = self.step;

        let (decision, epsilon) = if self.epoch == 1 {
            let eps = epsilon_at(t, cfg);
            let explore = (cfg.force_first_explore && t == 0) || self.rng.uniform() < eps;
            let decision = if explore {
                Decision::Explore
            } else {
                Decision::Exploit
            };
            (decision, eps)
        } else {
            (Decision::Exploit, 0.0)
        };

        let selected = match decision {
            Decision::Explore => {
                let sel_cfg = SelectionConfig::new(cfg.k_percent, pool.to_vec())?;
                select_top_k(norms, &sel_cfg)
            }
            Decision::Exploit => {
                let alpha = pool
                    .iter()
                    .map(|b| self.frequency(*b) as f64 + cfg.delta)
                    .collect();
                let p = sample_dirichlet(&DirichletParams::new(alpha)?, &mut self.rng);
                weighted_sample_without_replacement(&p, m, &mut self.rng)?
                    .into_iter()
                    .map(|i| pool[i])
                    .collect()
            }
        };
        debug_assert_eq!(selected.len(), m);

        for b in &selected {
            *self.freq.entry(*b).or_insert(0) += 1;
        }
        self.step += 1;
        self.last_decision = Some(decision);

        let record = SelectionRecord {
            step: t,
            epoch: self.epoch,
            decision,
            epsilon,
            selected: selected.clone(),
        };
        Ok((selected, record))
    }
}
