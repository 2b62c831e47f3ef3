use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Model, ModelSpec};
use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Real, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<Real>,
}

/// A model specification and its parameters, stored as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(spec: &ModelSpec, store: &ParamStore) -> Self {
        let params = store
            .iter()
            .map(|p| NamedTensor {
                name: p.name.clone(),
                shape: p.value.shape(),
                data: p.value.data().to_vec(),
            })
            .collect();
        Self {
            spec: spec.clone(),
            params,
        }
    }

    /// Rebuilds the model and checks that every stored tensor matches the
    /// expected name and shape.
    pub fn restore(&self) -> Result<(Model, ParamStore)> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = Model::new(self.spec.clone(), &mut store, &mut rng)?;
        if store.len() != self.params.len() {
            return Err(Error::Shape {
                op: "checkpoint",
                detail: format!("{} stored tensors, model has {}", self.params.len(), store.len()),
            });
        }
        let mut values = Vec::with_capacity(store.len());
        for (p, t) in store.iter().zip(&self.params) {
            if p.name != t.name || p.value.shape() != t.shape {
                return Err(Error::Shape {
                    op: "checkpoint",
                    detail: format!(
                        "stored '{}' {:?}, expected '{}' {:?}",
                        t.name,
                        t.shape,
                        p.name,
                        p.value.shape()
                    ),
                });
            }
            let v = Tensor::new(t.shape[0], t.shape[1], t.data.clone())?;
            if !v.all_finite() {
                return Err(Error::NonFinite(format!("checkpoint tensor '{}'", t.name)));
            }
            values.push(v);
        }
        store.set_values(values)?;
        Ok((model, store))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })
    }
}
