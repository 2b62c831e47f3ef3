use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::tensor::{Real, Tensor};
use crate::training::{Sample, Target, Task};

/// One graph of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub id: String,
    /// One feature vector per node.
    pub nodes: Vec<Vec<Real>>,
    pub edges: Vec<(usize, usize)>,
    /// Undirected records are symmetrized when converted to graphs.
    pub directed: bool,
    #[serde(default)]
    pub sources: Vec<usize>,
    #[serde(default)]
    pub targets: Vec<usize>,
    /// A class index or a real-valued target.
    pub label: Target,
    /// Records sharing a group are kept in the same split by grouped splits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl GraphRecord {
    pub fn feature_dim(&self) -> Option<usize> {
        self.nodes.first().map(Vec::len)
    }

    /// Checks feature dimensions, indices and the label against `task`.
    pub fn validate(&self, task: Task, feature_dim: usize) -> Result<()> {
        let n = self.nodes.len();
        if let Some(k) = self.nodes.iter().position(|x| x.len() != feature_dim) {
            return Err(invalid(format!(
                "record '{}': node {k} has {} features, expected {feature_dim}",
                self.id,
                self.nodes[k].len()
            )));
        }
        let endpoints = self.edges.iter().flat_map(|&(u, v)| [u, v]);
        for (what, mut it) in [
            ("edge endpoint", Box::new(endpoints) as Box<dyn Iterator<Item = usize>>),
            ("source", Box::new(self.sources.iter().copied())),
            ("target", Box::new(self.targets.iter().copied())),
        ] {
            if let Some(index) = it.find(|&x| x >= n) {
                return Err(Error::IndexOutOfRange { what, index, len: n });
            }
        }
        match (task, self.label) {
            (Task::Classification { num_classes }, Target::Class(c)) if c >= num_classes => {
                Err(Error::IndexOutOfRange {
                    what: "class label",
                    index: c,
                    len: num_classes,
                })
            }
            (Task::Classification { .. }, Target::Value(_)) => Err(invalid(format!(
                "record '{}': real-valued label in a classification dataset",
                self.id
            ))),
            (Task::Regression, Target::Value(y)) if !y.is_finite() => {
                Err(Error::NonFinite(format!("label of record '{}'", self.id)))
            }
            _ => Ok(()),
        }
    }

    pub fn to_graph(&self) -> Result<Graph> {
        let dim = self.feature_dim().unwrap_or(0);
        let features = Tensor::from_rows(&self.nodes, dim)?;
        let g = Graph::new(
            self.nodes.len(),
            self.edges.clone(),
            features,
            self.sources.iter().copied(),
            self.targets.iter().copied(),
        )?;
        if self.directed {
            Ok(g)
        } else {
            g.symmetrized()
        }
    }

    pub fn to_sample(&self) -> Result<Sample> {
        Ok(Sample::new(self.to_graph()?, self.label))
    }
}

/// Split ratios; they must sum to 1 within 1e-9.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub train: Real,
    pub val: Real,
    pub test: Real,
}

impl Ratios {
    pub fn new(train: Real, val: Real, test: Real) -> Result<Self> {
        let r = Self { train, val, test };
        r.validate()?;
        Ok(r)
    }

    pub fn as_array(&self) -> [Real; 3] {
        [self.train, self.val, self.test]
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(invalid(format!("split ratios must be non-negative, got {a:?}")));
        }
        let sum: Real = a.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("split ratios must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

impl Default for Ratios {
    fn default() -> Self {
        Self {
            train: 0.85,
            val: 0.05,
            test: 0.10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub task: Task,
    pub feature_dim: usize,
    pub ratios: Ratios,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        self.ratios.validate()?;
        if self.feature_dim == 0 {
            return Err(invalid("feature_dim must be positive"));
        }
        if let Task::Classification { num_classes } = self.task {
            if num_classes < 2 {
                return Err(invalid("classification needs at least 2 classes"));
            }
        }
        Ok(())
    }
}

/// Writes one JSON record per line.
pub fn save_records(path: &Path, records: &[GraphRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Io(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads one JSON record per line; blank lines are skipped. Errors carry the
/// 1-based line number.
pub fn load_records(path: &Path) -> Result<Vec<GraphRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: GraphRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: k + 1,
            msg: e.to_string(),
        })?;
        records.push(r);
    }
    Ok(records)
}

/// `data/foo.jsonl` -> `data/foo.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    path.with_file_name(format!("{stem}.manifest.json"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub records: Vec<GraphRecord>,
}

impl Dataset {
    pub fn new(manifest: DatasetManifest, records: Vec<GraphRecord>) -> Result<Self> {
        let d = Self { manifest, records };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        self.manifest.validate()?;
        for r in &self.records {
            r.validate(self.manifest.task, self.manifest.feature_dim)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes the records to `path` and the manifest next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        save_records(path, &self.records)?;
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(manifest_path(path), text + "\n")?;
        Ok(())
    }

    /// Loads records and manifest and validates every record. In regression
    /// datasets, integer labels are read as real values.
    pub fn load(path: &Path) -> Result<Self> {
        let mpath = manifest_path(path);
        let text = std::fs::read_to_string(&mpath).map_err(|e| Error::Io(format!("{}: {e}", mpath.display())))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: format!("{}: {e}", mpath.display()),
        })?;
        let mut records = load_records(path)?;
        if manifest.task == Task::Regression {
            for r in &mut records {
                if let Target::Class(c) = r.label {
                    r.label = Target::Value(c as Real);
                }
            }
        }
        Self::new(manifest, records)
    }

    pub fn samples(&self) -> Result<Vec<Sample>> {
        self.records.iter().map(GraphRecord::to_sample).collect()
    }
}
