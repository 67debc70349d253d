//! Selective block fine-tuning.
//!
//! A small decoder-only transformer ([`model`]) is split into update blocks
//! ([`partition`]). Each step, a subset of blocks is chosen either by
//! gradient-norm ranking ([`grad_select`]) or by the adaptive ε-greedy /
//! Dirichlet selector ([`ada_select`]), and only those blocks are stepped by
//! AdamW ([`optim`]), whose state residency and memory cost are tracked.

pub mod ada_select;
pub mod error;
pub mod grad_select;
pub mod model;
pub mod optim;
pub mod partition;
pub mod stoch;

pub use ada_select::{
    default_lambda, epsilon_at, AdaConfig, Decision, SelectionRecord, SelectorState,
};
pub use error::{Error, Result};
pub use grad_select::{
    accumulate_block_norms, select_top_k, selection_size, BlockSet, GradNormTable, SelectionConfig,
};
pub use model::{init_model, Batch, Model, ModelConfig, ParamId, ParamTensor, IGNORE_INDEX};
pub use optim::{
    adamw_step, memory_report, AdamWConfig, MemoryReport, Residency, SelectiveAdamState,
    Transfer, TransferKind, TransferLog,
};
pub use partition::{build_partition, BlockId, BlockPartition};
pub use stoch::{
    sample_dirichlet, sample_gamma, weighted_sample_without_replacement, DirichletParams, RngState,
};
