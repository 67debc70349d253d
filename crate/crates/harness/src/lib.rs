//! Training harness for selective block fine-tuning: run configuration,
//! synthetic tasks, the training loop, metrics files and strategy comparison.

pub mod compare;
pub mod config;
pub mod error;
pub mod metrics;
pub mod tasks;
pub mod train;

pub use compare::{compare_runs, ComparisonRow};
pub use config::{AdaSettings, RunConfig, Strategy, TaskConfig};
pub use error::{HarnessError, Result};
pub use metrics::{frequency_report, FrequencyReport, RunMetrics, RunSummary, StepDecision, StepRow};
pub use tasks::Task;
pub use train::{evaluate, run_training};
