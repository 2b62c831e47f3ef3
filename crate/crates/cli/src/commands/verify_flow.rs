use std::path::PathBuf;

use anyhow::{Context, Result};
use flowgnn::attention::EdgeWeights;
use flowgnn::dag::{random_encoder, DagEncoderConfig, DagModelKind};
use flowgnn::flow::{default_injections, encoder_flow_weights, extract_flow, kirchhoff_residual};
use flowgnn::tensor::Real;
use flowgnn::training::Checkpoint;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::train::load_dataset;
use crate::config::{apply, check, load};
use crate::output::{fmt_real, Failure, Report, RunDir};

/// Without a checkpoint, a FlowDAGNN with random parameters (`seed`,
/// `hidden`, `layers`) supplies the weights.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub hidden: usize,
    pub layers: usize,
    /// Largest accepted absolute residual.
    pub tolerance: Real,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            checkpoint: None,
            out: "runs/verify-flow".into(),
            seed: 0,
            hidden: 8,
            layers: 2,
            tolerance: flowgnn::flow::NORMALIZATION_TOLERANCE,
        }
    }
}

impl Config {
    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.data.as_os_str().is_empty() {
            p.push("data: a dataset path is required".to_string());
        }
        if self.hidden == 0 {
            p.push("hidden must be positive".into());
        }
        if self.layers == 0 {
            p.push("layers must be at least 1".into());
        }
        if !(self.tolerance >= 0.0) {
            p.push(format!("tolerance must be non-negative, got {}", self.tolerance));
        }
        p
    }
}

/// Check Kirchhoff's first law on the flows induced by flow attention.
#[derive(clap::Args, Debug)]
pub struct Args {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Checkpoint of a flow-attention model; random FlowDAGNN parameters
    /// are used when omitted.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    tolerance: Option<Real>,
}

type WeightsOf = Box<dyn Fn(&flowgnn::training::Sample) -> flowgnn::Result<Vec<EdgeWeights>>>;

#[derive(Serialize)]
struct NodeResidual<'a> {
    graph: &'a str,
    layer: usize,
    node: usize,
    residual: Real,
}

pub fn run(args: Args) -> Result<()> {
    let mut cfg: Config = load(args.config.as_deref())?;
    if args.checkpoint.is_some() {
        cfg.checkpoint = args.checkpoint.clone();
    }
    apply!(args, cfg, {
        data => data,
        out => out,
        seed => seed,
        hidden => hidden,
        layers => layers,
        tolerance => tolerance,
    });
    check(cfg.problems())?;
    let dir = RunDir::create(&cfg.out, &cfg)?;

    let ds = load_dataset(&cfg.data)?;
    let weights_of: WeightsOf = match &cfg.checkpoint {
        Some(path) => {
            let (model, store) = Checkpoint::load(path)
                .and_then(|c| c.restore())
                .with_context(|| format!("loading {}", path.display()))?;
            Box::new(move |s| model.flow_weights(&store, s))
        }
        None => {
            let config = DagEncoderConfig {
                kind: DagModelKind::Flowdagnn,
                input_dim: ds.manifest.feature_dim,
                hidden: cfg.hidden,
                layers: cfg.layers,
                bidirectional: false,
            };
            let (enc, store) = random_encoder(config, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
            Box::new(move |s| {
                let d = s.dag.as_ref().ok_or(flowgnn::Error::Cycle)?;
                encoder_flow_weights(&enc, &store, d)
            })
        }
    };

    let mut nodes = Vec::new();
    let mut rows = Vec::new();
    let mut report = Report::default();
    let (mut skipped, mut worst): (Vec<&str>, Real) = (Vec::new(), 0.0);
    for r in &ds.records {
        let sample = r.to_sample()?;
        let Some(d) = &sample.dag else {
            skipped.push(&r.id);
            continue;
        };
        let weights = weights_of(&sample).with_context(|| format!("graph {}", r.id))?;
        for (layer, beta) in weights.iter().enumerate() {
            let g = d.graph();
            let psi0 = default_injections(g, beta)?;
            let flow = extract_flow(d, beta, &psi0)?;
            let k = kirchhoff_residual(g, &flow)?;
            worst = worst.max(k.max_abs);
            for (&node, &residual) in &k.residuals {
                nodes.push(NodeResidual {
                    graph: &r.id,
                    layer,
                    node,
                    residual,
                });
            }
            let (injected, absorbed) = (flow.total_injection(), flow.absorbed(g));
            rows.push(vec![
                r.id.clone(),
                layer.to_string(),
                k.residuals.len().to_string(),
                fmt_real(k.max_abs),
                fmt_real(injected),
                fmt_real(absorbed),
            ]);
            report.record(json!({
                "graph": r.id,
                "layer": layer,
                "intermediate_nodes": k.residuals.len(),
                "max_abs_residual": k.max_abs,
                "injected": injected,
                "absorbed": absorbed,
            }))?;
        }
    }
    let checked = ds.len() - skipped.len();
    let passed = worst <= cfg.tolerance;
    let source = match &cfg.checkpoint {
        Some(p) => p.display().to_string(),
        None => format!("random flowdagnn (seed {})", cfg.seed),
    };
    let mut summary = Report::default();
    summary.text(format!("weights        {source}"));
    summary.text(format!(
        "graphs         {checked} checked, {} skipped as cyclic",
        skipped.len()
    ));
    summary.text(format!("max residual   {}", fmt_real(worst)));
    summary.text(format!("tolerance      {}", fmt_real(cfg.tolerance)));
    summary.text(format!("result         {}", if passed { "PASS" } else { "FAIL" }));
    report.record(json!({
        "kind": "summary",
        "graphs_checked": checked,
        "skipped_cyclic": skipped,
        "max_abs_residual": worst,
        "tolerance": cfg.tolerance,
        "passed": passed,
    }))?;

    let mut full = Report::default();
    full.text(summary.as_text().trim_end());
    full.text("");
    full.table(
        &["graph", "layer", "nodes", "max_residual", "injected", "absorbed"],
        &rows,
    );
    full.text("");
    full.table(
        &["graph", "layer", "node", "residual"],
        &nodes
            .iter()
            .map(|n| {
                vec![
                    n.graph.to_string(),
                    n.layer.to_string(),
                    n.node.to_string(),
                    fmt_real(n.residual),
                ]
            })
            .collect::<Vec<_>>(),
    );
    dir.write("report.txt", full.as_text())?;
    report.save_lines(&dir, "report.jsonl")?;
    dir.write_jsonl("residuals.jsonl", &nodes)?;
    print!("{}", summary.as_text());
    println!("per-node residuals in {}", dir.file("report.txt").display());
    dir.finish()?;
    if passed {
        Ok(())
    } else {
        Err(Failure::new(
            "check-failed",
            format!("max Kirchhoff residual {worst:e} exceeds {:e}", cfg.tolerance),
        )
        .into())
    }
}
