use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Real, Tensor};

pub const BETA1: Real = 0.9;
pub const BETA2: Real = 0.999;
pub const EPSILON: Real = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    /// Adam with decoupled weight decay.
    Adamw,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(Self::Adam),
            "adamw" => Ok(Self::Adamw),
            other => Err(Error::InvalidArgument(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Adam / AdamW with bias correction.
///
/// ```text
/// p ← p − lr·wd·p                      (AdamW only)
/// m ← β1 m + (1 − β1) g
/// v ← β2 v + (1 − β2) g²
/// p ← p − lr · m̂ / (√v̂ + ε),   m̂ = m / (1 − β1ᵗ),  v̂ = v / (1 − β2ᵗ)
/// ```
///
/// Plain Adam ignores `weight_decay`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub kind: OptimizerKind,
    pub weight_decay: Real,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(kind: OptimizerKind, weight_decay: Real, store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store
            .iter()
            .map(|p| Tensor::zeros(p.value.rows(), p.value.cols()))
            .collect();
        Self {
            kind,
            weight_decay,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update of every parameter in `store`. Leaves `store` untouched on
    /// error.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor], lr: Real) -> Result<()> {
        if grads.len() != store.len() || grads.len() != self.m.len() {
            return Err(Error::Shape {
                op: "optimizer step",
                detail: format!("{} gradients for {} parameters", grads.len(), store.len()),
            });
        }
        for (p, g) in store.iter().zip(grads) {
            if p.value.shape() != g.shape() {
                return Err(Error::Shape {
                    op: "optimizer step",
                    detail: format!(
                        "gradient {:?} for parameter '{}' {:?}",
                        g.shape(),
                        p.name,
                        p.value.shape()
                    ),
                });
            }
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of '{}'", p.name)));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        let decay = match self.kind {
            OptimizerKind::Adam => 0.0,
            OptimizerKind::Adamw => lr * self.weight_decay,
        };
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let p = store.get_mut(id).data_mut();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for (((pi, mi), vi), &gi) in p.iter_mut().zip(m).zip(v).zip(grads[k].data()) {
                if decay != 0.0 {
                    *pi -= decay * *pi;
                }
                *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *pi -= lr * mhat / (vhat.sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}
