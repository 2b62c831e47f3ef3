//! Flows induced by flow attention.
//!
//! Given flow-normalized edge weights `β` on a DAG and injections `ψ0` on the
//! edges leaving sources, the induced flow is
//!
//! ```text
//! ψ(j, i) = β_ij · Σ_{k ∈ N_in(j)} ψ(k, j)   for j ∉ S ∪ T
//! ψ(j, i) = ψ0(j, i)                         otherwise
//! ```
//!
//! evaluated in topological order. Because every sender's weights sum to one,
//! each intermediate node passes on exactly what it receives.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attention::{EdgeWeights, NormMode};
use crate::dag::DagEncoder;
use crate::error::{Error, Result};
use crate::graph::{Dag, Graph};
use crate::tensor::{ParamStore, Real, Tape};

/// Injections on edges leaving source (or target) nodes, keyed by `(from, to)`.
pub type Injections = BTreeMap<(usize, usize), Real>;

/// Tolerance used to decide whether edge weights are flow-normalized.
#[cfg(not(feature = "f32"))]
pub const NORMALIZATION_TOLERANCE: Real = 1e-9;
/// Tolerance used to decide whether edge weights are flow-normalized.
#[cfg(feature = "f32")]
pub const NORMALIZATION_TOLERANCE: Real = 1e-5;

/// An edge flow `ψ`, indexed like the graph's edge list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub values: Vec<Real>,
    pub source_injections: Injections,
}

impl Flow {
    /// Flow on edge `(from, to)`, if the edge exists.
    pub fn on(&self, g: &Graph, from: usize, to: usize) -> Option<Real> {
        g.out_edges(from)
            .iter()
            .find(|&&(v, _)| v == to)
            .map(|&(_, e)| self.values[e])
    }

    /// Total flow entering the graph's targets.
    pub fn absorbed(&self, g: &Graph) -> Real {
        g.targets()
            .iter()
            .flat_map(|&t| g.in_edges(t).iter().map(|&(_, e)| self.values[e]))
            .sum()
    }

    pub fn total_injection(&self) -> Real {
        self.source_injections.values().sum()
    }
}

/// Propagates `psi0` through the DAG along the flow weights `beta`.
pub fn extract_flow(d: &Dag, beta: &EdgeWeights, psi0: &Injections) -> Result<Flow> {
    let g = d.graph();
    if beta.mode != NormMode::Flow {
        return Err(Error::InvalidArgument(
            "flow extraction needs flow-normalized weights".into(),
        ));
    }
    if beta.values.len() != g.num_edges() {
        return Err(Error::Shape {
            op: "extract_flow",
            detail: format!("{} weights for {} edges", beta.values.len(), g.num_edges()),
        });
    }
    let err = beta.normalization_error(g)?;
    if err > NORMALIZATION_TOLERANCE {
        return Err(Error::InvalidArgument(format!(
            "weights are not flow-normalized (error {err:e})"
        )));
    }
    let injected = |j: usize| g.sources().contains(&j) || g.targets().contains(&j);
    for &(j, i) in psi0.keys() {
        if j >= g.num_nodes() || !injected(j) || !g.out_edges(j).iter().any(|&(v, _)| v == i) {
            return Err(Error::InvalidArgument(format!(
                "injection on ({j}, {i}), which is not an edge leaving a source or target"
            )));
        }
    }

    let mut values = vec![0.0; g.num_edges()];
    let mut source_injections = Injections::new();
    for &j in d.topo_order() {
        if injected(j) {
            for &(i, e) in g.out_edges(j) {
                let v = *psi0.get(&(j, i)).ok_or(Error::MissingInjection(j, i))?;
                values[e] = v;
                source_injections.insert((j, i), v);
            }
        } else {
            let inflow: Real = g.in_edges(j).iter().map(|&(_, e)| values[e]).sum();
            for &(_, e) in g.out_edges(j) {
                values[e] = beta.values[e] * inflow;
            }
        }
    }
    Ok(Flow {
        values,
        source_injections,
    })
}

/// Unit injection at every source, split by that source's flow weights.
/// Edges leaving a target that is not also a source get zero.
pub fn default_injections(g: &Graph, beta: &EdgeWeights) -> Result<Injections> {
    if beta.values.len() != g.num_edges() {
        return Err(Error::Shape {
            op: "default_injections",
            detail: format!("{} weights for {} edges", beta.values.len(), g.num_edges()),
        });
    }
    let mut psi0 = Injections::new();
    for &s in g.sources() {
        for &(i, e) in g.out_edges(s) {
            psi0.insert((s, i), beta.values[e]);
        }
    }
    for &t in g.targets() {
        for &(i, _) in g.out_edges(t) {
            psi0.entry((t, i)).or_insert(0.0);
        }
    }
    Ok(psi0)
}

/// Net inflow at every node outside `S ∪ T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KirchhoffReport {
    pub residuals: BTreeMap<usize, Real>,
    /// Zero when there are no intermediate nodes.
    pub max_abs: Real,
}

/// `Σ_in ψ − Σ_out ψ` at every node that is neither a source nor a target.
pub fn kirchhoff_residual(g: &Graph, flow: &Flow) -> Result<KirchhoffReport> {
    if flow.values.len() != g.num_edges() {
        return Err(Error::Shape {
            op: "kirchhoff_residual",
            detail: format!("flow on {} edges, graph has {}", flow.values.len(), g.num_edges()),
        });
    }
    let mut residuals = BTreeMap::new();
    let mut max_abs: Real = 0.0;
    for v in 0..g.num_nodes() {
        if g.sources().contains(&v) || g.targets().contains(&v) {
            continue;
        }
        let inflow: Real = g.in_edges(v).iter().map(|&(_, e)| flow.values[e]).sum();
        let outflow: Real = g.out_edges(v).iter().map(|&(_, e)| flow.values[e]).sum();
        let r = inflow - outflow;
        max_abs = max_abs.max(r.abs());
        residuals.insert(v, r);
    }
    Ok(KirchhoffReport { residuals, max_abs })
}

/// Flow weights of every layer of a FlowDAGNN encoder on `d`.
pub fn encoder_flow_weights(enc: &DagEncoder, store: &ParamStore, d: &Dag) -> Result<Vec<EdgeWeights>> {
    let mut tape = Tape::new();
    let trace = enc.trace(&mut tape, store, d)?;
    if trace.flow_layers.is_empty() {
        return Err(Error::InvalidArgument("encoder has no flow attention layers".into()));
    }
    Ok(trace
        .flow_layers
        .iter()
        .map(|l| crate::dag::edge_weights(&tape, l.beta))
        .collect())
}
