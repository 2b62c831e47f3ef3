use std::path::PathBuf;

use anyhow::Result;
use flowgnn::checks::{gradcheck_suite, GRADCHECK_TOLERANCE};
use flowgnn::tensor::Real;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{apply, check, load};
use crate::output::{fmt_real, Failure, Report, RunDir};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Central-difference step.
    pub eps: Real,
    /// Keeps checks whose name contains one of these strings; empty keeps all.
    pub only: Vec<String>,
    pub out: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            only: Vec::new(),
            out: "runs/gradcheck".into(),
        }
    }
}

impl Config {
    fn problems(&self) -> Vec<String> {
        if self.eps > 0.0 && self.eps.is_finite() {
            Vec::new()
        } else {
            vec![format!("eps must be a positive number, got {}", self.eps)]
        }
    }
}

/// Compare analytic gradients with central differences for every layer and
/// model type.
#[derive(clap::Args, Debug)]
pub struct Args {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    eps: Option<Real>,
    /// Only run checks whose name contains this string, e.g. `flowgat`;
    /// repeat or separate with commas.
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<String>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<()> {
    let mut cfg: Config = load(args.config.as_deref())?;
    apply!(args, cfg, { eps => eps, only => only, out => out });
    check(cfg.problems())?;
    let dir = RunDir::create(&cfg.out, &cfg)?;

    let entries: Vec<_> = gradcheck_suite(cfg.eps)?
        .into_iter()
        .filter(|e| cfg.only.is_empty() || cfg.only.iter().any(|o| e.name.contains(o.as_str())))
        .collect();
    if entries.is_empty() {
        return Err(Failure::new("config", format!("no check matches {:?}", cfg.only)).into());
    }
    let mut report = Report::default();
    let rows: Vec<Vec<String>> = entries
        .iter()
        .map(|e| {
            vec![
                e.name.clone(),
                e.report.coordinates.to_string(),
                fmt_real(e.report.max_rel_error),
                fmt_real(e.report.worst_analytic),
                fmt_real(e.report.worst_numeric),
                if e.passed() { "PASS" } else { "FAIL" }.into(),
            ]
        })
        .collect();
    report.text(format!(
        "central differences, eps {}, tolerance {}",
        fmt_real(cfg.eps),
        fmt_real(GRADCHECK_TOLERANCE)
    ));
    report.table(
        &[
            "check",
            "coordinates",
            "max_rel_error",
            "worst_analytic",
            "worst_numeric",
            "result",
        ],
        &rows,
    );
    for e in &entries {
        report.record(json!({
            "check": e.name,
            "passed": e.passed(),
            "report": e.report,
        }))?;
    }
    let worst = entries.iter().map(|e| e.report.max_rel_error).fold(0.0, Real::max);
    report.text(format!("max relative error {}", fmt_real(worst)));
    report.save(&dir)?;
    print!("{}", report.as_text());
    dir.finish()?;
    let failed: Vec<&str> = entries
        .iter()
        .filter(|e| !e.passed())
        .map(|e| e.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::new("check-failed", format!("gradient checks failed: {}", failed.join(", "))).into())
    }
}
