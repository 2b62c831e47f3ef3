use std::path::PathBuf;

use anyhow::Result;
use flowgnn::dag::{DagEncoderConfig, DagModelKind};
use flowgnn::expressivity::{
    discrimination_report, gen_fig1_pair, gen_pair_family, witness_suite, DiscriminationReport, FeatureMap,
    WitnessOutcome, SEPARATION_THRESHOLD,
};
use flowgnn::tensor::Real;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{apply, check, load, parse_enum};
use crate::output::{fmt_real, Failure, Report, RunDir};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    /// The shared-node and duplicated-branch circuits.
    Fig1,
    /// Random DAGs paired with their computation trees.
    Family,
    /// Multisets against their scaled copies, one attention layer.
    Witness,
}

/// Largest output change allowed for standard attention and largest
/// deviation from exact scaling allowed for flow messages.
const WITNESS_TOLERANCE: Real = 1e-9;
/// Share of family pairs FlowDAGNN must separate.
const FAMILY_SEPARATED: Real = 0.95;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub suites: Vec<Suite>,
    pub models: Vec<DagModelKind>,
    /// Number of random parameter seeds per model.
    pub seeds: usize,
    /// First parameter seed; also seeds the pair family and witness draws.
    pub seed: u64,
    pub pairs: usize,
    pub max_nodes: usize,
    pub hidden: usize,
    pub layers: usize,
    pub bidirectional: bool,
    pub witness_draws: usize,
    pub witness_dim: usize,
    pub out: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            suites: vec![Suite::Fig1, Suite::Family, Suite::Witness],
            models: vec![DagModelKind::Dagnn, DagModelKind::Dvae, DagModelKind::Flowdagnn],
            seeds: 20,
            seed: 0,
            pairs: 50,
            max_nodes: 10,
            hidden: 8,
            layers: 2,
            bidirectional: false,
            witness_draws: 100,
            witness_dim: 4,
            out: "runs/expressivity".into(),
        }
    }
}

impl Config {
    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let positive = [
            ("seeds", self.seeds),
            ("pairs", self.pairs),
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("witness_draws", self.witness_draws),
            ("witness_dim", self.witness_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                p.push(format!("{name} must be at least 1"));
            }
        }
        if self.max_nodes < 4 {
            p.push(format!("max_nodes must be at least 4, got {}", self.max_nodes));
        }
        if self.suites.is_empty() {
            p.push("suites must name at least one suite".into());
        }
        if self.models.is_empty() && self.suites.iter().any(|s| *s != Suite::Witness) {
            p.push("models must name at least one model".into());
        }
        p
    }
}

/// Run the expressivity suites on random parameters.
#[derive(clap::Args, Debug)]
pub struct Args {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// fig1 | family | witness; repeat or separate with commas.
    #[arg(long = "suite", value_delimiter = ',', value_parser = parse_enum::<Suite>)]
    suites: Option<Vec<Suite>>,
    /// dagnn | dvae | flowdagnn; repeat or separate with commas.
    #[arg(long = "model", value_delimiter = ',', value_parser = parse_enum::<DagModelKind>)]
    models: Option<Vec<DagModelKind>>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    max_nodes: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    witness_draws: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn model_name(kind: DagModelKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// The expected outcome for a model: standard attention never separates a
/// same-computation-tree pair, flow attention does.
fn claim(suite: Suite, rep: &DiscriminationReport) -> (&'static str, bool) {
    match (rep.model, suite) {
        (DagModelKind::Flowdagnn, Suite::Fig1) => ("separates", rep.separated_fraction == 1.0),
        (DagModelKind::Flowdagnn, _) => ("separates", rep.pairs_separated_fraction >= FAMILY_SEPARATED),
        _ => ("equal", rep.all_equal),
    }
}

fn witness_row(mode: &str, outcomes: &[WitnessOutcome], claim: &str, holds: bool) -> Vec<String> {
    let max_d = outcomes.iter().map(|w| w.output_distance).fold(0.0, Real::max);
    let min_d = outcomes
        .iter()
        .map(|w| w.output_distance)
        .fold(Real::INFINITY, Real::min);
    let max_e = outcomes.iter().map(|w| w.message_scale_error).fold(0.0, Real::max);
    vec![
        mode.into(),
        outcomes.len().to_string(),
        fmt_real(min_d),
        fmt_real(max_d),
        fmt_real(max_e),
        claim.into(),
        holds.to_string(),
    ]
}

pub fn run(args: Args) -> Result<()> {
    let mut cfg: Config = load(args.config.as_deref())?;
    apply!(args, cfg, {
        suites => suites,
        models => models,
        seeds => seeds,
        seed => seed,
        pairs => pairs,
        max_nodes => max_nodes,
        hidden => hidden,
        layers => layers,
        witness_draws => witness_draws,
        out => out,
    });
    check(cfg.problems())?;
    let dir = RunDir::create(&cfg.out, &cfg)?;

    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let mut report = Report::default();
    let mut failed = Vec::new();
    let mut rows = Vec::new();
    for &suite in &cfg.suites {
        let pairs = match suite {
            Suite::Fig1 => vec![gen_fig1_pair(&FeatureMap::default())?],
            Suite::Family => gen_pair_family(cfg.pairs, cfg.max_nodes, cfg.seed)?,
            Suite::Witness => continue,
        };
        for &kind in &cfg.models {
            let config = DagEncoderConfig {
                kind,
                input_dim: 0,
                hidden: cfg.hidden,
                layers: cfg.layers,
                bidirectional: cfg.bidirectional,
            };
            let rep = discrimination_report(&config, &pairs, &seeds)?;
            let (what, holds) = claim(suite, &rep);
            let name = model_name(kind);
            if !holds {
                failed.push(format!("{suite:?}/{name}").to_lowercase());
            }
            rows.push(vec![
                format!("{suite:?}").to_lowercase(),
                name,
                pairs.len().to_string(),
                seeds.len().to_string(),
                fmt_real(rep.separated_fraction),
                fmt_real(rep.pairs_separated_fraction),
                fmt_real(rep.max_distance),
                what.into(),
                holds.to_string(),
            ]);
            report.record(json!({
                "suite": suite,
                "claim": what,
                "holds": holds,
                "report": rep,
            }))?;
        }
    }
    if !rows.is_empty() {
        report.text(format!(
            "separation threshold {}; pairs_separated counts pairs separated under >= 95% of seeds",
            fmt_real(SEPARATION_THRESHOLD)
        ));
        report.table(
            &[
                "suite",
                "model",
                "pairs",
                "seeds",
                "separated",
                "pairs_separated",
                "max_distance",
                "claim",
                "holds",
            ],
            &rows,
        );
    }
    if cfg.suites.contains(&Suite::Witness) {
        let w = witness_suite(cfg.witness_draws, cfg.witness_dim, cfg.seed)?;
        let standard_holds = w.max_standard_distance() < WITNESS_TOLERANCE;
        let flow_holds = w.max_flow_scale_error() < WITNESS_TOLERANCE && w.min_flow_distance() > SEPARATION_THRESHOLD;
        for (mode, ok) in [("standard", standard_holds), ("flow", flow_holds)] {
            if !ok {
                failed.push(format!("witness/{mode}"));
            }
        }
        if !rows.is_empty() {
            report.text("");
        }
        report.text(format!(
            "witness: {} draws, scales 2, 3, 5, all scoring kinds",
            cfg.witness_draws
        ));
        report.table(
            &[
                "mode",
                "outcomes",
                "min_distance",
                "max_distance",
                "max_scale_error",
                "claim",
                "holds",
            ],
            &[
                witness_row("standard", &w.standard, "invariant", standard_holds),
                witness_row("flow", &w.flow, "scales", flow_holds),
            ],
        );
        report.record(json!({
            "suite": Suite::Witness,
            "max_standard_distance": w.max_standard_distance(),
            "max_flow_scale_error": w.max_flow_scale_error(),
            "min_flow_distance": w.min_flow_distance(),
            "standard_holds": standard_holds,
            "flow_holds": flow_holds,
        }))?;
    }
    report.save(&dir)?;
    print!("{}", report.as_text());
    dir.finish()?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::new("check-failed", format!("claims do not hold: {}", failed.join(", "))).into())
    }
}
