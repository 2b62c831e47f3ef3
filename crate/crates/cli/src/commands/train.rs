use std::path::PathBuf;

use anyhow::{Context, Result};
use flowgnn::attention::{NormMode, ScoringKind};
use flowgnn::dag::DagModelKind;
use flowgnn::data::{split, Dataset, SplitStrategy, Splits};
use flowgnn::tensor::{ParamStore, Real};
use flowgnn::training::{
    self, Architecture, Checkpoint, EpochRecord, Head, LossKind, MetricsReport, Model, ModelSpec, OptimizerKind,
    Sample, Scheduler, Task, TrainConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{apply, check, load, parse_enum};
use crate::output::{fmt_real, Report, RunDir};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gnn,
    Dag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Linear,
    Mlp,
}

/// Model shape. `scoring` and `mode` apply to the `gnn` family, `kind` and
/// `bidirectional` to the `dag` family.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    pub scoring: ScoringKind,
    pub mode: NormMode,
    pub kind: DagModelKind,
    pub bidirectional: bool,
    pub hidden: usize,
    pub layers: usize,
    pub head: HeadKind,
    pub head_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            family: Family::Gnn,
            scoring: ScoringKind::Gat,
            mode: NormMode::Flow,
            kind: DagModelKind::Flowdagnn,
            bidirectional: false,
            hidden: 16,
            layers: 2,
            head: HeadKind::Mlp,
            head_hidden: 16,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, input_dim: usize, task: Task) -> ModelSpec {
        let architecture = match self.family {
            Family::Gnn => Architecture::Gnn {
                scoring: self.scoring,
                mode: self.mode,
                hidden: self.hidden,
                layers: self.layers,
            },
            Family::Dag => Architecture::Dag {
                kind: self.kind,
                hidden: self.hidden,
                layers: self.layers,
                bidirectional: self.bidirectional,
            },
        };
        let head = match self.head {
            HeadKind::Linear => Head::Linear,
            HeadKind::Mlp => Head::Mlp {
                hidden: self.head_hidden,
            },
        };
        ModelSpec {
            architecture,
            input_dim,
            task,
            head,
        }
    }

    fn problems(&self) -> Vec<String> {
        self.spec(1, Task::Regression)
            .problems()
            .into_iter()
            .map(|p| format!("model: {p}"))
            .collect()
    }
}

/// Optimization settings. The loss follows the dataset task.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub lr: Real,
    pub optimizer: OptimizerKind,
    pub weight_decay: Real,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub scheduler: Scheduler,
    pub dropout: Real,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            lr: d.lr,
            optimizer: d.optimizer,
            weight_decay: d.weight_decay,
            batch_size: d.batch_size,
            max_epochs: d.max_epochs,
            early_stop_patience: d.early_stop_patience,
            scheduler: d.scheduler,
            dropout: d.dropout,
        }
    }
}

impl TrainingConfig {
    fn resolve(&self, loss: LossKind, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            optimizer: self.optimizer,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            early_stop_patience: self.early_stop_patience,
            scheduler: self.scheduler,
            loss,
            seed,
            dropout: self.dropout,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data: PathBuf,
    pub out: PathBuf,
    /// Drives the split, the initialization, shuffling and dropout.
    pub seed: u64,
    pub split: SplitStrategy,
    pub model: ModelConfig,
    pub training: TrainingConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            out: "runs/train".into(),
            seed: 0,
            split: SplitStrategy::Random,
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
        }
    }
}

impl Config {
    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.data.as_os_str().is_empty() {
            p.push("data: a dataset path is required".into());
        }
        p.extend(self.model.problems());
        p.extend(
            self.training
                .resolve(LossKind::Nll, self.seed)
                .problems()
                .into_iter()
                .map(|s| format!("training: {s}")),
        );
        p
    }
}

/// Train a model on a dataset.
#[derive(clap::Args, Debug)]
pub struct Args {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// random | stratified | grouped
    #[arg(long, value_parser = parse_enum::<SplitStrategy>)]
    split: Option<SplitStrategy>,
    /// gnn | dag
    #[arg(long, value_parser = parse_enum::<Family>)]
    family: Option<Family>,
    /// gat | gatv2 | tc
    #[arg(long, value_parser = parse_enum::<ScoringKind>)]
    scoring: Option<ScoringKind>,
    /// standard | flow
    #[arg(long, value_parser = parse_enum::<NormMode>)]
    mode: Option<NormMode>,
    /// dagnn | dvae | flowdagnn
    #[arg(long, value_parser = parse_enum::<DagModelKind>)]
    kind: Option<DagModelKind>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    lr: Option<Real>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Early-stopping patience in epochs.
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    dropout: Option<Real>,
    #[arg(long)]
    weight_decay: Option<Real>,
}

pub fn load_dataset(path: &std::path::Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading {}", path.display()))
}

pub fn split_samples(ds: &Dataset, seed: u64, strategy: SplitStrategy) -> Result<Splits<Sample>> {
    let s = split(&ds.records, &ds.manifest.ratios, seed, strategy)?;
    let conv =
        |rs: Vec<flowgnn::data::GraphRecord>| rs.iter().map(|r| r.to_sample()).collect::<flowgnn::Result<Vec<_>>>();
    Ok(Splits {
        train: conv(s.train)?,
        val: conv(s.val)?,
        test: conv(s.test)?,
    })
}

pub fn metric_row(name: &str, m: &MetricsReport) -> Vec<String> {
    let opt = |v: Option<Real>| v.map(fmt_real).unwrap_or_else(|| "-".into());
    vec![
        name.to_string(),
        fmt_real(m.loss),
        opt(m.balanced_accuracy),
        opt(m.macro_f1),
        opt(m.accuracy),
        opt(m.rmse),
        opt(m.pearson_r),
    ]
}

pub const METRIC_HEADER: [&str; 7] = ["set", "loss", "bal_acc", "macro_f1", "accuracy", "rmse", "pearson_r"];

fn max_param_change(a: &ParamStore, b: &ParamStore) -> Real {
    a.iter()
        .zip(b.iter())
        .filter_map(|(x, y)| x.value.max_abs_diff(&y.value))
        .fold(0.0, Real::max)
}

fn history_text(history: &[EpochRecord]) -> String {
    let mut r = Report::default();
    let rows: Vec<Vec<String>> = history
        .iter()
        .map(|h| {
            vec![
                h.epoch.to_string(),
                fmt_real(h.train_loss),
                fmt_real(h.val_loss),
                fmt_real(h.val_metric),
                fmt_real(h.lr),
            ]
        })
        .collect();
    r.table(&["epoch", "train_loss", "val_loss", "val_metric", "lr"], &rows);
    r.as_text().to_string()
}

pub fn run(args: Args) -> Result<()> {
    let mut cfg: Config = load(args.config.as_deref())?;
    apply!(args, cfg, {
        data => data,
        out => out,
        seed => seed,
        split => split,
        family => model.family,
        scoring => model.scoring,
        mode => model.mode,
        kind => model.kind,
        hidden => model.hidden,
        layers => model.layers,
        lr => training.lr,
        batch_size => training.batch_size,
        max_epochs => training.max_epochs,
        patience => training.early_stop_patience,
        dropout => training.dropout,
        weight_decay => training.weight_decay,
    });
    check(cfg.problems())?;
    let dir = RunDir::create(&cfg.out, &cfg)?;

    let ds = load_dataset(&cfg.data)?;
    let parts = split_samples(&ds, cfg.seed, cfg.split)?;
    let task = ds.manifest.task;
    let spec = cfg.model.spec(ds.manifest.feature_dim, task);
    let mut store = ParamStore::new();
    let model = Model::new(spec, &mut store, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    let tc = cfg.training.resolve(LossKind::for_task(task), cfg.seed);
    let outcome = training::train(&model, store.clone(), &parts.train, &parts.val, &tc)?;

    Checkpoint::new(&model.spec, &outcome.store).save(&dir.file("checkpoint.json"))?;
    dir.write_jsonl("history.jsonl", &outcome.history)?;
    dir.write("history.txt", &history_text(&outcome.history))?;

    let change = max_param_change(&store, &outcome.store);
    let epochs = outcome.history.last().map_or(0, |h| h.epoch);
    let mut report = Report::default();
    report.text(format!(
        "records      train {} / val {} / test {}",
        parts.train.len(),
        parts.val.len(),
        parts.test.len()
    ));
    report.text(format!("epochs       {epochs}"));
    report.text(format!("best epoch   {}", outcome.best_epoch));
    report.text(format!("param change {}", fmt_real(change)));
    report.text("");
    report.record(json!({
        "kind": "summary",
        "train_size": parts.train.len(),
        "val_size": parts.val.len(),
        "test_size": parts.test.len(),
        "epochs": epochs,
        "best_epoch": outcome.best_epoch,
        "max_param_change": change,
    }))?;
    let mut rows = vec![metric_row("val", &outcome.report)];
    report.record(json!({"kind": "metrics", "set": "val", "metrics": outcome.report}))?;
    if !parts.test.is_empty() {
        let test = training::evaluate(&model, &outcome.store, &parts.test)?;
        rows.push(metric_row("test", &test));
        report.record(json!({"kind": "metrics", "set": "test", "metrics": test}))?;
    }
    report.table(&METRIC_HEADER, &rows);
    report.save(&dir)?;
    print!("{}", report.as_text());
    dir.finish()
}
