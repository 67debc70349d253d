//! Run configuration. Every field has a default, so an empty TOML document is
//! a valid configuration; CLI flags are applied on top of the file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use blockwise::{default_lambda, AdaConfig, AdamWConfig, ModelConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Every pool block, every step.
    Full,
    /// Gradient-norm top-k every step.
    FixedTopK,
    AdaGradSelect,
    /// `m` pool blocks uniformly at random.
    UniformRandom,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Full,
        Strategy::FixedTopK,
        Strategy::AdaGradSelect,
        Strategy::UniformRandom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Full => "full",
            Strategy::FixedTopK => "fixed_top_k",
            Strategy::AdaGradSelect => "ada_grad_select",
            Strategy::UniformRandom => "uniform_random",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown strategy `{s}` (expected one of: full, fixed_top_k, ada_grad_select, uniform_random)"
                )
            })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    /// A random prefix followed by its copy; only the copy is scored.
    #[default]
    SyntheticCopy,
    /// Packed `a b = c` problems with `c = (a + b) mod modulus`.
    SyntheticModAdd { modulus: usize },
    /// Character-level language modeling over a text file, or the built-in
    /// corpus when no path is given.
    CharLm {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaSettings {
    pub delta: f64,
    pub epsilon0: f64,
    /// ε at the end of epoch 1; determines λ unless `lambda` is set.
    pub epsilon_end: f64,
    pub lambda: Option<f64>,
    pub force_first_explore: bool,
}

impl Default for AdaSettings {
    fn default() -> Self {
        Self {
            delta: 1.0,
            epsilon0: 1.0,
            epsilon_end: blockwise::ada_select::DEFAULT_EPSILON_END,
            lambda: None,
            force_first_explore: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub strategy: Strategy,
    /// Percentage of pool blocks updated per step; ignored by `full`.
    pub k_percent: f64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    /// Put embedding, final norm and head in the selection pool.
    pub include_auxiliary: bool,
    /// Keep summing gradient norms across steps instead of resetting each step.
    pub accumulate_norms: bool,
    /// Held-out batches scored after training.
    pub eval_batches: usize,
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    pub ada: AdaSettings,
    pub adamw: AdamWConfig,
    pub task: TaskConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            strategy: Strategy::AdaGradSelect,
            k_percent: 30.0,
            epochs: 2,
            steps_per_epoch: 500,
            batch_size: 8,
            seq_len: 16,
            include_auxiliary: false,
            accumulate_norms: false,
            eval_batches: 8,
            out_dir: PathBuf::from("runs/latest"),
            model: ModelConfig {
                vocab_size: 12,
                d_model: 16,
                n_heads: 2,
                n_blocks: 8,
                mlp_ratio: 4,
                max_seq_len: 16,
                param_dtype_bytes: 4,
            },
            ada: AdaSettings::default(),
            adamw: AdamWConfig::default(),
            task: TaskConfig::SyntheticCopy,
        }
    }
}

impl RunConfig {
    /// Parses a TOML document. Keys it leaves out, including keys inside
    /// partially given tables, keep their `RunConfig::default()` values.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse()?;
        let mut merged: toml::Table = toml::from_str(&Self::default().to_toml_string())?;
        // A different task kind replaces the default task wholesale.
        if user.contains_key("task") {
            merged.remove("task");
        }
        merge(&mut merged, user);
        Ok(merged.try_into()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config is always serializable")
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.adamw.validate()?;
        if self.epochs == 0 {
            return Err(HarnessError::Config("epochs must be at least 1".into()));
        }
        if self.steps_per_epoch == 0 || self.batch_size == 0 || self.eval_batches == 0 {
            return Err(HarnessError::Config(
                "steps_per_epoch, batch_size and eval_batches must be positive".into(),
            ));
        }
        if self.seq_len < 2 || self.seq_len > self.model.max_seq_len {
            return Err(HarnessError::Config(format!(
                "seq_len must be in [2, max_seq_len = {}], got {}",
                self.model.max_seq_len, self.seq_len
            )));
        }
        if self.strategy != Strategy::Full && !(self.k_percent > 0.0 && self.k_percent <= 100.0) {
            return Err(HarnessError::Config(format!(
                "k_percent must be in (0, 100], got {}",
                self.k_percent
            )));
        }
        self.ada_config()?;
        Ok(())
    }

    /// Selector configuration; `full` runs select every block, so k is 100 there.
    pub fn ada_config(&self) -> Result<AdaConfig> {
        let k_percent = if self.strategy == Strategy::Full {
            100.0
        } else {
            self.k_percent
        };
        let lambda = match self.ada.lambda {
            Some(l) => l,
            None => default_lambda(self.ada.epsilon0, self.ada.epsilon_end, self.steps_per_epoch)?,
        };
        let cfg = AdaConfig {
            k_percent,
            delta: self.ada.delta,
            epsilon0: self.ada.epsilon0,
            lambda,
            steps_per_epoch: self.steps_per_epoch,
            force_first_explore: self.ada.force_first_explore,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}
