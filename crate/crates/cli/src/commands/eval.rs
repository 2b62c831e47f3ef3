use std::path::PathBuf;

use anyhow::{Context, Result};
use flowgnn::data::SplitStrategy;
use flowgnn::training::{evaluate, Checkpoint};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::train::{load_dataset, metric_row, split_samples, METRIC_HEADER};
use crate::config::{apply, check, load, parse_enum};
use crate::output::{Failure, Report, RunDir};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    All,
    Train,
    Val,
    Test,
}

/// With `part` other than `all`, the dataset is split with `split` and
/// `seed` exactly as `train` does, so a training run's test set can be
/// evaluated again.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub out: PathBuf,
    pub part: Part,
    pub split: SplitStrategy,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            checkpoint: PathBuf::new(),
            data: PathBuf::new(),
            out: "runs/eval".into(),
            part: Part::All,
            split: SplitStrategy::Random,
            seed: 0,
        }
    }
}

impl Config {
    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.checkpoint.as_os_str().is_empty() {
            p.push("checkpoint: a checkpoint path is required".to_string());
        }
        if self.data.as_os_str().is_empty() {
            p.push("data: a dataset path is required".into());
        }
        p
    }
}

/// Evaluate a checkpoint on a dataset.
#[derive(clap::Args, Debug)]
pub struct Args {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// all | train | val | test
    #[arg(long, value_parser = parse_enum::<Part>)]
    part: Option<Part>,
    /// random | stratified | grouped
    #[arg(long, value_parser = parse_enum::<SplitStrategy>)]
    split: Option<SplitStrategy>,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(args: Args) -> Result<()> {
    let mut cfg: Config = load(args.config.as_deref())?;
    apply!(args, cfg, {
        checkpoint => checkpoint,
        data => data,
        out => out,
        part => part,
        split => split,
        seed => seed,
    });
    check(cfg.problems())?;
    let dir = RunDir::create(&cfg.out, &cfg)?;

    let (model, store) = Checkpoint::load(&cfg.checkpoint)
        .and_then(|c| c.restore())
        .with_context(|| format!("loading {}", cfg.checkpoint.display()))?;
    let ds = load_dataset(&cfg.data)?;
    if ds.manifest.feature_dim != model.spec.input_dim || ds.manifest.task != model.spec.task {
        return Err(Failure::new(
            "mismatch",
            format!(
                "dataset has {} features and task {:?}, the model expects {} and {:?}",
                ds.manifest.feature_dim, ds.manifest.task, model.spec.input_dim, model.spec.task
            ),
        )
        .into());
    }
    let samples = match cfg.part {
        Part::All => ds.samples()?,
        part => {
            let s = split_samples(&ds, cfg.seed, cfg.split)?;
            match part {
                Part::Train => s.train,
                Part::Val => s.val,
                _ => s.test,
            }
        }
    };
    let metrics = evaluate(&model, &store, &samples)?;
    let set = serde_json::to_value(cfg.part)?;
    let set = set.as_str().unwrap_or("all");

    let mut report = Report::default();
    report.text(format!("records  {}", samples.len()));
    report.table(&METRIC_HEADER, &[metric_row(set, &metrics)]);
    if let Some(c) = &metrics.confusion {
        report.text("");
        report.text("confusion (rows: truth, columns: prediction)");
        let rows: Vec<Vec<String>> = (0..c.num_classes())
            .map(|t| {
                std::iter::once(t.to_string())
                    .chain((0..c.num_classes()).map(|p| c.counts[t][p].to_string()))
                    .collect()
            })
            .collect();
        let header: Vec<String> = std::iter::once(String::new())
            .chain((0..c.num_classes()).map(|p| p.to_string()))
            .collect();
        report.table(&header.iter().map(String::as_str).collect::<Vec<_>>(), &rows);
    }
    report.record(json!({"set": set, "records": samples.len(), "metrics": metrics}))?;
    report.save(&dir)?;
    print!("{}", report.as_text());
    dir.finish()
}
