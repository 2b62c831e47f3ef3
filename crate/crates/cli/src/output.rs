use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use flowgnn::tensor::Real;
use serde::Serialize;

/// A failure with a short machine-readable kind.
#[derive(Debug)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn config(problems: &[String]) -> Self {
        let noun = if problems.len() == 1 { "problem" } else { "problems" };
        Self::new("config", format!("{} {noun}: {}", problems.len(), problems.join("; ")))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

/// Kind, single-line message and exit code of an error.
pub fn describe(e: &anyhow::Error) -> (&'static str, String, u8) {
    let message = format!("{e:#}").split_whitespace().collect::<Vec<_>>().join(" ");
    if let Some(f) = e.downcast_ref::<Failure>() {
        let code = if f.kind == "config" { 2 } else { 1 };
        return (f.kind, message, code);
    }
    let kind = match e.downcast_ref::<flowgnn::Error>() {
        Some(flowgnn::Error::Io(_)) => "io",
        Some(flowgnn::Error::Parse { .. }) => "parse",
        Some(flowgnn::Error::Cycle) => "cycle",
        Some(flowgnn::Error::NonFinite(_)) => "non-finite",
        Some(flowgnn::Error::InvalidArgument(_)) => "invalid-argument",
        Some(_) => "model",
        None if e.downcast_ref::<std::io::Error>().is_some() => "io",
        None => "internal",
    };
    (kind, message, 1)
}

/// An output directory. It holds an `INCOMPLETE` marker until
/// [`RunDir::finish`] is called, so interrupted or failed runs are visible.
pub struct RunDir {
    path: PathBuf,
}

pub const INCOMPLETE: &str = "INCOMPLETE";

impl RunDir {
    /// Creates the directory, marks it incomplete and writes the resolved
    /// configuration.
    pub fn create(path: &Path, config: &impl Serialize) -> Result<Self> {
        fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        let dir = Self {
            path: path.to_path_buf(),
        };
        dir.write(INCOMPLETE, "run did not finish\n")?;
        dir.write("config.toml", &toml::to_string(config).context("serializing config")?)?;
        Ok(dir)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<()> {
        let p = self.file(name);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
    }

    pub fn write_jsonl<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        let mut out = String::new();
        for r in rows {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        self.write(name, &out)
    }

    pub fn finish(self) -> Result<()> {
        let p = self.file(INCOMPLETE);
        fs::remove_file(&p).with_context(|| format!("removing {}", p.display()))
    }
}

/// A report in two forms: aligned text for people and JSON lines for tools.
#[derive(Default)]
pub struct Report {
    text: String,
    lines: Vec<serde_json::Value>,
}

impl Report {
    pub fn text(&mut self, line: impl AsRef<str>) {
        self.text.push_str(line.as_ref());
        self.text.push('\n');
    }

    pub fn table(&mut self, header: &[&str], rows: &[Vec<String>]) {
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for r in rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let fmt_row = |cells: Vec<&str>| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        self.text(fmt_row(header.to_vec()));
        for r in rows {
            self.text(fmt_row(r.iter().map(String::as_str).collect()));
        }
    }

    pub fn record(&mut self, value: impl Serialize) -> Result<()> {
        self.lines.push(serde_json::to_value(value)?);
        Ok(())
    }

    pub fn as_text(&self) -> &str {
        &self.text
    }

    /// Writes `report.txt` and `report.jsonl`.
    pub fn save(&self, dir: &RunDir) -> Result<()> {
        dir.write("report.txt", &self.text)?;
        self.save_lines(dir, "report.jsonl")
    }

    pub fn save_lines(&self, dir: &RunDir, name: &str) -> Result<()> {
        dir.write_jsonl(name, &self.lines)
    }
}

pub fn fmt_real(x: Real) -> String {
    if x == 0.0 || (1e-3..1e6).contains(&x.abs()) {
        format!("{x:.6}")
    } else {
        format!("{x:.3e}")
    }
}
