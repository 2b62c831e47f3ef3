use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Result;
use flowgnn::data::{gen_flow_classification, gen_pair_discrimination};
use flowgnn::training::Target;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{apply, check, load, parse_enum};
use crate::output::{Report, RunDir};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    /// Circuit classification by maximum edge flow.
    #[default]
    Flow,
    /// DAGs against their computation trees.
    Pairs,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub kind: DataKind,
    /// Number of graphs, or of base DAGs for `pairs` (two records each).
    pub n: usize,
    /// Largest circuit size for `flow`.
    pub max_nodes: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            kind: DataKind::Flow,
            n: 500,
            max_nodes: 16,
            seed: 0,
            out: "runs/data".into(),
        }
    }
}

impl Config {
    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        match self.kind {
            DataKind::Flow => {
                if self.n == 0 {
                    p.push("n must be at least 1".into());
                }
                if self.max_nodes < 4 {
                    p.push(format!("max_nodes must be at least 4, got {}", self.max_nodes));
                }
            }
            DataKind::Pairs if self.n < 2 => p.push(format!("pairs needs n >= 2, got {}", self.n)),
            DataKind::Pairs => {}
        }
        p
    }
}

/// Generate a synthetic dataset.
#[derive(clap::Args, Debug)]
pub struct Args {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// flow | pairs
    #[arg(long, value_parser = parse_enum::<DataKind>)]
    kind: Option<DataKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    max_nodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<()> {
    let mut cfg: Config = load(args.config.as_deref())?;
    apply!(args, cfg, { kind => kind, n => n, max_nodes => max_nodes, seed => seed, out => out });
    check(cfg.problems())?;
    let dir = RunDir::create(&cfg.out, &cfg)?;
    let ds = match cfg.kind {
        DataKind::Flow => gen_flow_classification(cfg.n, cfg.max_nodes, cfg.seed)?,
        DataKind::Pairs => gen_pair_discrimination(cfg.n, cfg.seed)?,
    };
    let path = dir.file("dataset.jsonl");
    ds.save(&path)?;

    let mut classes: BTreeMap<usize, usize> = BTreeMap::new();
    for r in &ds.records {
        if let Target::Class(c) = r.label {
            *classes.entry(c).or_default() += 1;
        }
    }
    let mut report = Report::default();
    report.text(format!("dataset      {}", path.display()));
    report.text(format!("records      {}", ds.len()));
    report.text(format!("feature_dim  {}", ds.manifest.feature_dim));
    for (c, k) in &classes {
        report.text(format!("class {c}      {k}"));
    }
    report.record(json!({
        "dataset": path,
        "records": ds.len(),
        "feature_dim": ds.manifest.feature_dim,
        "class_counts": classes,
    }))?;
    report.save(&dir)?;
    print!("{}", report.as_text());
    dir.finish()
}
