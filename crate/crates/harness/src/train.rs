//! The training loop: backward, block selection, selective AdamW, metrics.

use std::collections::BTreeMap;
use std::time::Instant;

use blockwise::{
    adamw_step, build_partition, init_model, memory_report, select_top_k, selection_size,
    weighted_sample_without_replacement, BlockId, BlockPartition, BlockSet, GradNormTable,
    RngState, SelectionConfig, SelectiveAdamState, SelectorState,
};

use crate::config::{RunConfig, Strategy};
use crate::error::{HarnessError, Result};
use crate::metrics::{RunMetrics, RunSummary, StepDecision, StepRow};
use crate::tasks::Task;

/// RNG stream ids derived from the run seed. Model init uses the seed directly.
pub const DATA_STREAM: u64 = 1;
pub const SELECTOR_STREAM: u64 = 2;
pub const EVAL_STREAM: u64 = 3;

pub fn run_training(cfg: &RunConfig) -> Result<RunMetrics> {
    cfg.validate()?;
    let ada_cfg = cfg.ada_config()?;
    let task = Task::from_config(&cfg.task, cfg.model.vocab_size, cfg.seq_len)?;
    let mut model = init_model(cfg.model, cfg.seed)?;
    let partition = build_partition(model.params(), &cfg.model, cfg.include_auxiliary)?;
    let pool = partition.pool().to_vec();
    let m = selection_size(ada_cfg.k_percent, pool.len())?;
    let bpp = cfg.model.param_dtype_bytes;

    let mut data_rng = RngState::with_stream(cfg.seed, DATA_STREAM);
    let mut selector = SelectorState::new(&pool, RngState::with_stream(cfg.seed, SELECTOR_STREAM));
    let mut random_rng = RngState::with_stream(cfg.seed, SELECTOR_STREAM);
    let mut state = SelectiveAdamState::new(model.params(), &partition, bpp);
    let mut norms = GradNormTable::zeroed(&partition);
    let top_k_cfg = SelectionConfig::new(ada_cfg.k_percent, pool.clone())?;

    let mut rows = Vec::with_capacity(cfg.total_steps());
    let mut last_selected = BlockSet::new();
    let started = Instant::now();

    for epoch in 1..=cfg.epochs as u32 {
        if epoch > 1 {
            selector.advance_epoch();
        }
        for _ in 0..cfg.steps_per_epoch {
            let step = rows.len() as u64;
            let step_start = Instant::now();
            let batch = task.sample(&mut data_rng, cfg.batch_size, cfg.seq_len);
            let loss = match model.backward(&batch) {
                Ok(loss) => loss,
                Err(blockwise::Error::NonFinite { .. }) => {
                    let summary = summarize(cfg, &partition, m, &rows, &last_selected, &model, started);
                    return Err(HarnessError::Diverged {
                        step,
                        partial: Box::new(RunMetrics { rows, summary }),
                    });
                }
                Err(e) => return Err(e.into()),
            };
            if !cfg.accumulate_norms {
                norms.reset();
            }
            norms.accumulate(model.params(), &partition)?;

            let (selected, decision, epsilon) = match cfg.strategy {
                Strategy::Full => (pool.iter().copied().collect(), StepDecision::Full, 0.0),
                Strategy::FixedTopK => (select_top_k(&norms, &top_k_cfg), StepDecision::TopK, 0.0),
                Strategy::AdaGradSelect => {
                    let (set, record) = selector.select_blocks(&ada_cfg, &norms, &pool)?;
                    (set, record.decision.into(), record.epsilon)
                }
                Strategy::UniformRandom => {
                    let uniform = vec![1.0; pool.len()];
                    let set: BlockSet = weighted_sample_without_replacement(&uniform, m, &mut random_rng)?
                        .into_iter()
                        .map(|i| pool[i])
                        .collect();
                    (set, StepDecision::Random, 0.0)
                }
            };

            let log = state.ensure_residency(&selected, &partition);
            adamw_step(model.params_mut(), &mut state, &cfg.adamw, &selected, &partition)?;

            rows.push(StepRow {
                step,
                epoch,
                loss,
                decision,
                epsilon,
                selected: selected.iter().copied().collect(),
                device_opt_bytes: state.device_bytes(&partition),
                prefetch_bytes: log.prefetch_bytes(),
                evict_bytes: log.evict_bytes(),
                wall_ms: step_start.elapsed().as_secs_f64() * 1e3,
            });
            last_selected = selected;
        }
    }

    let summary = summarize(cfg, &partition, m, &rows, &last_selected, &model, started);
    Ok(RunMetrics { rows, summary })
}

/// Mean loss on `eval_batches` held-out batches, drawn from their own stream
/// so every strategy is scored on the same data.
pub fn evaluate(model: &blockwise::Model, cfg: &RunConfig) -> Result<f64> {
    let task = Task::from_config(&cfg.task, cfg.model.vocab_size, cfg.seq_len)?;
    let mut rng = RngState::with_stream(cfg.seed, EVAL_STREAM);
    let mut total = 0.0;
    for _ in 0..cfg.eval_batches {
        let batch = task.sample(&mut rng, cfg.batch_size, cfg.seq_len);
        total += model.forward_loss(&batch)?;
    }
    Ok(total / cfg.eval_batches as f64)
}

fn summarize(
    cfg: &RunConfig,
    partition: &BlockPartition,
    m: usize,
    rows: &[StepRow],
    last_selected: &BlockSet,
    model: &blockwise::Model,
    started: Instant,
) -> RunSummary {
    let losses: Vec<f64> = rows.iter().map(|r| r.loss).collect();
    let tail = (losses.len() / 10).max(1).min(losses.len());
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            f64::NAN
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let mut frequencies: BTreeMap<BlockId, u64> = partition.pool().iter().map(|&b| (b, 0)).collect();
    for row in rows {
        for b in &row.selected {
            *frequencies.entry(*b).or_insert(0) += 1;
        }
    }
    let device: Vec<f64> = rows.iter().map(|r| r.device_opt_bytes as f64).collect();
    RunSummary {
        config: cfg.clone(),
        pool: partition.pool().to_vec(),
        selection_size: m,
        total_steps: rows.len() as u64,
        initial_loss: losses.first().copied().unwrap_or(f64::NAN),
        final_loss: losses.last().copied().unwrap_or(f64::NAN),
        mean_loss_last_10pct: mean(&losses[losses.len() - tail..]),
        eval_loss: evaluate(model, cfg).unwrap_or(f64::NAN),
        mean_device_opt_bytes: mean(&device),
        total_prefetch_bytes: rows.iter().map(|r| r.prefetch_bytes).sum(),
        total_evict_bytes: rows.iter().map(|r| r.evict_bytes).sum(),
        memory: memory_report(partition, last_selected, cfg.model.param_dtype_bytes),
        total_wall_ms: started.elapsed().as_secs_f64() * 1e3,
        frequencies,
    }
}
