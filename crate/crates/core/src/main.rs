use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fact_core::evaluator::{GroupKey, ScoreMode};
use fact_core::harness::report::markdown_table;
use fact_core::harness::{cmd_gen, cmd_report, cmd_run, cmd_score, ExperimentConfig, Method, RunOptions, TaskSpec};
use fact_core::retriever::RetrieverKind;

#[derive(Parser)]
#[command(name = "fact", version, about = "Iterative fact retrieval with context rewriting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as JSONL.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; defaults to `<out_dir>/<task label>.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a method over a dataset for every sweep point.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Aggregate record files into a summary CSV.
    Score {
        #[arg(long, required = true, num_args = 1..)]
        records: Vec<PathBuf>,
        #[arg(long, default_value = "summary.csv")]
        out: PathBuf,
        /// Comma separated subset of task,model,method,iterations.
        #[arg(long, value_delimiter = ',', default_value = "task,model,method,iterations")]
        group_by: Vec<String>,
        /// Pool matched/gold counts across samples instead of averaging.
        #[arg(long)]
        pooled: bool,
    },
    /// Render summary CSVs into a Markdown table and an SVG chart.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        summary: Vec<PathBuf>,
        /// Output path without extension.
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Print the resolved configuration.
    Config {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Task label such as K1V10Q1@4K or N32@16K.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Dataset JSONL; defaults to the file `gen` writes.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Records JSONL; defaults to `<out_dir>/records-<task>-<model>-<method>.jsonl`.
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    /// Comma separated iteration counts.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<u32>>,
    #[arg(long)]
    workers: Option<usize>,
    /// Mock retriever capacity.
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long)]
    tail_recovery: bool,
    #[arg(long)]
    hallucination_rate: Option<f64>,
    /// Use the HTTP backend with this model.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    base_url: Option<String>,
    /// Skip sample/sweep points already in the records file.
    #[arg(long)]
    resume: bool,
    /// Allow calls to a live backend.
    #[arg(long)]
    live: bool,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load_or_default(self.config.as_deref())?;
        if let Some(label) = &self.task {
            cfg.task = TaskSpec::from_label(label)?;
            cfg.retriever.template_id = cfg.task.default_template();
        }
        if let Some(dir) = &self.out_dir {
            cfg.out_dir = dir.clone();
        }
        Ok(cfg)
    }
}

impl RunArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(s) = &self.sweep {
            cfg.sweep = s.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        let mock = &mut cfg.retriever.mock_params;
        if let Some(m) = self.capacity {
            mock.capacity_m = m;
        }
        if self.tail_recovery {
            mock.tail_recovery = true;
        }
        if let Some(h) = self.hallucination_rate {
            mock.hallucination_rate = h;
        }
        if let Some(model) = &self.model {
            cfg.retriever.kind = RetrieverKind::Http;
            cfg.retriever.http.model = model.clone();
        }
        if let Some(url) = &self.base_url {
            cfg.retriever.http.base_url = Some(url.clone());
        }
    }
}

fn dataset_path(cfg: &ExperimentConfig) -> PathBuf {
    match &cfg.task {
        TaskSpec::Longbench { path, .. } => path.clone(),
        task => cfg.out_dir.join(format!("{}.jsonl", task.label())),
    }
}

fn records_path(cfg: &ExperimentConfig) -> PathBuf {
    let model: String = cfg
        .retriever
        .model_id()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    cfg.out_dir.join(format!("records-{}-{model}-{}.jsonl", cfg.task.label(), cfg.method))
}

fn parse_group_by(keys: &[String]) -> Result<Vec<GroupKey>> {
    keys.iter()
        .filter(|k| !k.trim().is_empty())
        .map(|k| match k.trim() {
            "task" => Ok(GroupKey::Task),
            "model" => Ok(GroupKey::Model),
            "method" => Ok(GroupKey::Method),
            "iterations" | "n" => Ok(GroupKey::Iterations),
            other => bail!("unknown group key {other:?}"),
        })
        .collect()
}

fn run_paths(cfg: &ExperimentConfig, run: &RunArgs) -> (PathBuf, PathBuf) {
    let dataset = run.dataset.clone().unwrap_or_else(|| dataset_path(cfg));
    let records = run.records.clone().unwrap_or_else(|| records_path(cfg));
    (dataset, records)
}

fn show(path: &Path) -> String {
    path.display().to_string()
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen { common, samples, seed, out } => {
            let mut cfg = common.resolve()?;
            if let Some(n) = samples {
                cfg.samples = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = out.unwrap_or_else(|| dataset_path(&cfg));
            let report = cmd_gen(&cfg, &out).with_context(|| format!("generating {}", show(&out)))?;
            println!(
                "wrote {} instance(s) to {} (mean context {:.0} chars)",
                report.count,
                show(&report.path),
                report.mean_context_len
            );
        }
        Command::Run { common, run } => {
            let mut cfg = common.resolve()?;
            run.apply(&mut cfg);
            let (dataset, records) = run_paths(&cfg, &run);
            let opts = RunOptions { resume: run.resume, live: run.live };
            let stats = cmd_run(&cfg, &dataset, &records, opts)?;
            println!(
                "wrote {} record(s) to {} ({} failed, {} skipped)",
                stats.written,
                show(&stats.path),
                stats.failed,
                stats.skipped
            );
        }
        Command::Score { records, out, group_by, pooled } => {
            let mode = if pooled { ScoreMode::Pooled } else { ScoreMode::PerSample };
            let rows = cmd_score(&records, &out, &parse_group_by(&group_by)?, mode)?;
            print!("{}", markdown_table(&rows));
            println!("\nwrote {}", show(&out));
        }
        Command::Report { summary, out } => {
            let files = cmd_report(&summary, &out)?;
            println!("wrote {} and {}", show(&files.markdown), show(&files.svg));
        }
        Command::Config { common, run } => {
            let mut cfg = common.resolve()?;
            run.apply(&mut cfg);
            cfg.validate()?;
            println!("{}", cfg.to_pretty_json());
        }
    }
    Ok(())
}
