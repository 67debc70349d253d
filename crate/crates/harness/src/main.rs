use std::path::PathBuf;

use anyhow::{Context, Result};
use blockwise_harness::{compare_runs, frequency_report, run_training, RunConfig, RunMetrics, Strategy};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "blockwise", version, about = "Selective block fine-tuning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write metrics.csv and summary.json.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Percentage of pool blocks updated per step.
        #[arg(long = "k")]
        k_percent: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train several configurations and write a comparison table.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the summary and per-block selection counts of a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            seed,
            strategy,
            k_percent,
            out,
        } => {
            let mut cfg = match &config {
                Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
                None => RunConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(s) = strategy {
                cfg.strategy = s;
            }
            if let Some(k) = k_percent {
                cfg.k_percent = k;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let metrics = run_training(&cfg)?;
            metrics.write(&cfg.out_dir)?;
            let s = &metrics.summary;
            println!(
                "{} k={} steps={} loss {:.4} -> {:.4} (eval {:.4}), optimizer memory -{:.1}%",
                cfg.strategy,
                cfg.k_percent,
                s.total_steps,
                s.initial_loss,
                s.mean_loss_last_10pct,
                s.eval_loss,
                s.memory.percent_reduction
            );
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Compare { configs, out } => {
            let cfgs = configs
                .iter()
                .map(|p| RunConfig::load(p).with_context(|| format!("loading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let table = compare_runs(&cfgs, &out)?;
            println!(
                "{:<20} {:>6} {:>10} {:>10} {:>14} {:>8}",
                "run", "k", "loss", "eval", "device bytes", "saved %"
            );
            for r in &table {
                println!(
                    "{:<20} {:>6} {:>10.4} {:>10.4} {:>14.0} {:>8.1}",
                    r.run, r.k_percent, r.mean_loss_last_10pct, r.eval_loss, r.mean_device_opt_bytes, r.percent_reduction
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Report { run } => {
            let metrics = RunMetrics::load(&run).with_context(|| format!("reading {}", run.display()))?;
            let s = &metrics.summary;
            println!("strategy        {}", s.config.strategy);
            println!("steps           {}", s.total_steps);
            println!("blocks/step     {} of {}", s.selection_size, s.pool.len());
            println!("loss            {:.4} -> {:.4}", s.initial_loss, s.mean_loss_last_10pct);
            println!("eval loss       {:.4}", s.eval_loss);
            println!("memory saved    {:.2}%", s.memory.percent_reduction);
            let freq = frequency_report(&metrics);
            println!("selection counts ({} total):", freq.total_selections());
            for e in &freq.entries {
                println!("  {:<12} {:>6} {:>6.1}%", e.block.to_string(), e.count, 100.0 * e.share);
            }
        }
    }
    Ok(())
}
